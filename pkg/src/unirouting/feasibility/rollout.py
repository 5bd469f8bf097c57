"""Batched construction driver shared by random validation, baselines and the policy."""

from __future__ import annotations

import numpy as np

from .batch import BatchEnv, EnvStatic


class DeadEnd(RuntimeError):
    pass


class Trace:
    """Action history of a batch; rebuilds per-row node sequences."""

    def __init__(self, env: BatchEnv, depots, firsts):
        self.n = env.n_rows
        self.prefix = []
        dc = env.static.dc
        for r in range(self.n):
            if dc:
                pre = [int(depots[r])]
                if int(firsts[r]) != int(depots[r]):
                    pre.append(int(firsts[r]))
            else:
                pre = [int(firsts[r])]
            self.prefix.append(pre)
        self.steps = []

    def record(self, actions):
        self.steps.append(np.array(actions, dtype=np.int64))

    def sequences(self):
        out = [list(p) for p in self.prefix]
        for acts in self.steps:
            for r in np.nonzero(acts >= 0)[0]:
                out[r].append(int(acts[r]))
        return out


def expand_starts(static: EnvStatic, starts_per_instance):
    """Flatten per-instance start lists into row arrays."""
    inst, depots, firsts = [], [], []
    for b, starts in enumerate(starts_per_instance):
        for depot, first in starts:
            inst.append(b)
            depots.append(0 if depot is None else depot)
            firsts.append(first)
    return np.array(inst, np.int64), np.array(depots, np.int64), np.array(firsts, np.int64)


def run(env: BatchEnv, choose, trace: Trace | None = None, max_steps=None):
    """Step ``env`` to completion with ``choose(env, mask) -> actions``.

    Rows whose mask empties before completion are marked dead and stopped;
    their indices are returned.
    """
    dead = np.zeros(env.n_rows, dtype=bool)
    limit = max_steps or 4 * env.static.n_nodes + 8
    for _ in range(limit):
        live = ~env.done & ~dead
        if not live.any():
            break
        mask = env.mask()
        empty = live & ~mask.any(1)
        if empty.any():
            dead |= empty
            live &= ~empty
        actions = np.full(env.n_rows, -1, dtype=np.int64)
        if live.any():
            actions[live] = choose(env, mask, live)[live]
        env.step(actions)
        if trace is not None:
            trace.record(actions)
    else:
        if (~env.done & ~dead).any():
            raise DeadEnd("construction did not terminate")
    return dead


def uniform_choice(rng):
    def choose(env, mask, live):
        u = rng.random(mask.shape)
        u[~mask] = -1.0
        return u.argmax(1)
    return choose


def nearest_choice(env, mask, live):
    """Nearest selectable node, ties to the lowest index."""
    s = env.static
    d = s.dist[env.inst, env.current].copy()
    d[~mask] = np.inf
    return d.argmin(1)


def random_rollouts(instances, per_instance, seed=0, starts="random"):
    """Uniform random masked rollouts; returns (sequences, objectives, dead flags).

    Starts are drawn uniformly from each instance's feasible start set.
    """
    rng = np.random.default_rng(seed)
    static = EnvStatic(instances)
    per = []
    for b in range(len(instances)):
        options = static.default_starts(b)
        picks = rng.integers(0, len(options), size=per_instance)
        per.append([options[i] for i in picks])
    inst, depots, firsts = expand_starts(static, per)
    env = BatchEnv.start(static, inst, depots, firsts)
    trace = Trace(env, depots, firsts)
    dead = run(env, uniform_choice(rng), trace)
    return trace.sequences(), env.objective(), dead
