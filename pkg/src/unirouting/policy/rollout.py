"""Masked autoregressive construction with the policy network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..feasibility.batch import BatchEnv, EnvStatic
from ..feasibility.rollout import Trace, expand_starts
from .model import UnifiedPolicy, node_features, normalised_dist, relation_tensor, signature_tensor


@dataclass
class Trajectory:
    sequence: list
    log_prob_sum: float
    reward: float
    start: tuple
    feasible: bool = True


@dataclass
class RolloutBatch:
    sequences: list
    log_probs: torch.Tensor     # (R,) summed chosen log-probabilities
    rewards: np.ndarray         # (R,)
    objectives: np.ndarray      # (R,)
    dead: np.ndarray            # (R,) bool; rollout hit an empty mask
    inst: np.ndarray            # (R,) instance index per row
    starts: list


def encode_instances(model: UnifiedPolicy, instances):
    dt = model.dtype
    rho, omega, xi = node_features(instances, dt)
    D = normalised_dist(instances, dt)
    R = relation_tensor(instances, dt)
    lam = signature_tensor(instances, dt)
    H = model.encode(model.embed_nodes(rho, omega, xi), D, R, lam)
    dec = model.hyper_decoder_params(lam)
    return {"H": H, "K": H @ dec["W_K"], "V": H @ dec["W_V"], "dec": dec, "D": D}


def _rows(dec, ri):
    out = {k: v[ri] for k, v in dec.items() if k != "alphas"}
    out["alphas"] = {k: v[ri] for k, v in dec["alphas"].items()}
    return out


def run_policy(model: UnifiedPolicy, instances, starts_per_instance, mode="greedy",
               generator: torch.Generator | None = None) -> RolloutBatch:
    """Construct one solution per (instance, start) row.

    Gradients flow into ``log_probs`` unless the caller disables them.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"mode must be greedy or sample, got {mode!r}")
    static = EnvStatic(instances)
    inst, depots, firsts = expand_starts(static, starts_per_instance)
    if inst.size == 0:
        raise ValueError("no start nodes given")
    env = BatchEnv.start(static, inst, depots, firsts)
    trace = Trace(env, depots, firsts)
    enc = encode_instances(model, instances)
    H, K, V, D, dec = enc["H"], enc["K"], enc["V"], enc["D"], enc["dec"]
    n_nodes = static.n_nodes
    n_rows = env.n_rows
    first_node = np.where(env.first >= 0, env.first, env.current).copy()
    logp = torch.zeros(n_rows, dtype=model.dtype)
    dead = np.zeros(n_rows, dtype=bool)
    for _ in range(4 * n_nodes + 8):
        live = ~env.done & ~dead
        if not live.any():
            break
        mask = env.mask()
        empty = live & ~mask.any(1)
        dead |= empty
        rows = np.nonzero(live & ~empty)[0]
        actions = np.full(n_rows, -1, dtype=np.int64)
        if rows.size:
            ri = torch.as_tensor(inst[rows])
            cur = torch.as_tensor(env.current[rows])
            fst = torch.as_tensor(first_node[rows])
            ctx = torch.as_tensor(env.context()[rows], dtype=model.dtype)
            m = torch.as_tensor(mask[rows])
            Hr = H[ri]
            _, lp = model.decode_logits(Hr, K[ri], V[ri], _rows(dec, ri), Hr[torch.arange(len(rows)), fst],
                                        Hr[torch.arange(len(rows)), cur], ctx, D[ri, cur], m, n_nodes)
            if mode == "greedy":
                a = lp.argmax(-1)
            else:
                a = torch.multinomial(lp.detach().exp(), 1, generator=generator).squeeze(-1)
            logp = logp.index_add(0, torch.as_tensor(rows), lp.gather(-1, a[:, None]).squeeze(-1))
            actions[rows] = a.numpy()
        env.step(actions)
        trace.record(actions)
    starts = [(None if static.dc == 0 else int(d), int(f)) for d, f in zip(depots, firsts)]
    return RolloutBatch(trace.sequences(), logp, env.reward(), env.objective(), dead, inst, starts)


def rollout(model: UnifiedPolicy, instance, mode="greedy", starts=None, generator=None) -> list:
    """Trajectories for one instance (default: every feasible start)."""
    if starts is None:
        starts = EnvStatic([instance]).default_starts()
    with torch.no_grad():
        rb = run_policy(model, [instance], [starts], mode, generator)
    return [Trajectory(rb.sequences[r], float(rb.log_probs[r]), float(rb.rewards[r]), rb.starts[r], not rb.dead[r])
            for r in range(len(starts))]


def default_starts(instances):
    static = EnvStatic(instances)
    return [static.default_starts(b) for b in range(len(instances))]
