"""Vectorised rollout environment over a batch of same-spec instances."""

from __future__ import annotations

import numpy as np

from .. import _accel
from ..variants import is_single_tour
from . import kernels as K


class InfeasibleStart(ValueError):
    """Requested start node is masked in the fresh state."""


def family_flags(families) -> int:
    flags = 0
    for f in families:
        flags |= K.FAMILY_FLAGS[f]
    if is_single_tour(families):
        flags |= K.F_SINGLE
    if set(families) <= {"A"}:
        flags |= K.F_NODEPOT
    return flags


class EnvStatic:
    """Stacked static arrays for ``B`` instances sharing one spec."""

    def __init__(self, instances, jit=None):
        if not instances:
            raise ValueError("need at least one instance")
        spec = instances[0].spec
        if any(inst.spec != spec for inst in instances):
            raise ValueError("a batch must share one constraint spec")
        self.instances = list(instances)
        self.spec = spec
        self.jit = _accel.use_jit() if jit is None else jit
        self.flags = family_flags(spec.families)
        self.dc = spec.depot_count
        self.n_nodes = spec.n_nodes
        p = spec.params
        self.par = np.array([
            p.get("duration_limit", 0.0), p.get("depot_end_time", 0.0),
            p.get("max_tour_length", 0.0), p.get("required_prize", 0.0),
        ], dtype=np.float64)
        self.dist = np.ascontiguousarray(np.stack([i.dist for i in instances]))
        self.om = np.ascontiguousarray(np.stack([i.omega for i in instances]))
        self.pair = np.ascontiguousarray(np.stack([i.pair for i in instances]))
        self.fresh = K.fresh_table(self.jit, self.flags, self.dc, self.par, self.dist, self.om, self.pair)

    @property
    def single(self) -> bool:
        return bool(self.flags & K.F_SINGLE)

    @property
    def maximize(self) -> bool:
        return bool(self.flags & K.F_OP)

    def default_starts(self, b=0):
        """All (depot, first) pairs feasible from a fresh depot state."""
        if self.dc == 0:
            return [(None, j) for j in range(self.n_nodes)]
        starts = []
        for k in range(self.dc):
            env = BatchEnv.at_depot(self, np.array([b]), np.array([k]))
            m = env.mask()[0]
            starts += [(k, j) for j in range(self.dc, self.n_nodes) if m[j]]
        return starts


class BatchEnv:
    """Mutable state arrays for ``R`` rollouts; see :mod:`.kernels` for layout."""

    def __init__(self, static, inst, vis, fs, st):
        self.static = static
        self.inst = inst
        self.vis = vis
        self.fs = fs
        self.st = st

    @classmethod
    def blank(cls, static, inst):
        inst = np.ascontiguousarray(inst, dtype=np.int64)
        R = inst.shape[0]
        vis = np.zeros((R, static.n_nodes), dtype=np.bool_)
        fs = np.zeros((R, K.NF))
        fs[:, K.LOAD] = 1.0
        st = np.zeros((R, K.NI), dtype=np.int64)
        st[:, K.FIRST] = -1
        st[:, K.ORIGIN] = -1
        return cls(static, inst, vis, fs, st)

    @classmethod
    def at_depot(cls, static, inst, depots):
        env = cls.blank(static, inst)
        env.st[:, K.CUR] = depots
        env.st[:, K.ORIGIN] = depots
        env.st[:, K.ATDEPOT] = 1
        env.st[:, K.RELOC] = 1
        return env

    @classmethod
    def start(cls, static, inst, depots, firsts):
        """Rows positioned at ``firsts``; depot variants depart from ``depots``."""
        firsts = np.asarray(firsts, dtype=np.int64)
        if static.dc == 0:
            env = cls.blank(static, inst)
            R = env.inst.shape[0]
            env.vis[np.arange(R), firsts] = True
            env.st[:, K.CUR] = firsts
            env.st[:, K.FIRST] = firsts
            return env
        env = cls.at_depot(static, inst, np.asarray(depots, dtype=np.int64))
        if np.all(firsts < static.dc) and np.array_equal(firsts, env.st[:, K.CUR]):
            return env
        m = env.mask()
        R = env.inst.shape[0]
        bad = ~m[np.arange(R), firsts]
        if bad.any():
            r = int(np.nonzero(bad)[0][0])
            raise InfeasibleStart(f"node {int(firsts[r])} cannot start a route from depot {int(env.st[r, K.CUR])}")
        env.step(firsts)
        return env

    # ------------------------------------------------------------------ kernels

    def mask(self):
        s = self.static
        out = np.empty(self.vis.shape, dtype=np.bool_)
        return K.compute_mask(s.jit, s.flags, s.dc, s.par, s.dist, s.om, s.pair, s.fresh,
                              self.inst, self.vis, self.fs, self.st, out)

    def step(self, actions):
        s = self.static
        actions = np.ascontiguousarray(actions, dtype=np.int64)
        K.apply_step(s.jit, s.flags, s.dc, s.par, s.dist, s.om, s.pair, self.inst, self.vis,
                     self.fs, self.st, actions)

    # ------------------------------------------------------------------ views

    @property
    def n_rows(self) -> int:
        return self.inst.shape[0]

    @property
    def done(self):
        return self.st[:, K.DONE] == 1

    @property
    def current(self):
        return self.st[:, K.CUR]

    @property
    def first(self):
        return self.st[:, K.FIRST]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return BatchEnv(self.static, self.inst[idx], self.vis[idx].copy(), self.fs[idx].copy(),
                        self.st[idx].copy())

    def copy(self):
        return self.take(np.arange(self.n_rows))

    def context(self):
        """Scalar decoder context per row (remaining load / budget / prize)."""
        s = self.static
        fam = s.spec.families
        if "C" in fam:
            return self.fs[:, K.LOAD].copy()
        if "OP" in fam:
            budget = s.par[K.P_MAXLEN]
            return (budget - self.fs[:, K.RLEN]) / budget
        if "PC" in fam:
            return np.maximum(0.0, s.par[K.P_REQ] - self.fs[:, K.PRIZE])
        return np.zeros(self.n_rows)

    def penalty(self):
        """Penalty of unvisited customers (PC only)."""
        s = self.static
        if "PC" not in s.spec.families:
            return np.zeros(self.n_rows)
        pen = s.om[self.inst, :, K.PEN]
        return np.where(self.vis, 0.0, pen)[:, s.dc:].sum(1)

    def objective(self):
        """Objective per row: prize for OP, travel (+ penalties) otherwise."""
        if self.static.maximize:
            return self.fs[:, K.PRIZE].copy()
        return self.fs[:, K.TRAVEL] + self.penalty()

    def reward(self):
        obj = self.objective()
        return obj if self.static.maximize else -obj
