"""Single-state API over the batched kernels, plus objective evaluation."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .batch import BatchEnv, EnvStatic, InfeasibleStart


class MaskViolation(ValueError):
    """Action not selectable in the given state."""


@dataclass(frozen=True)
class StepState:
    visited: frozenset
    current: int
    first_customer: int | None
    origin_depot: int | None
    load: float = 1.0
    backhaul_load: float = 0.0
    clock: float = 0.0
    route_length: float = 0.0
    collected_prize: float = 0.0
    route_phase: str = "linehaul"
    at_depot: bool = False
    done: bool = False
    travel: float = 0.0
    route_size: int = 0
    pending: int = 0
    can_relocate: bool = False

    def to_dict(self) -> dict:
        return {
            "visited": sorted(self.visited), "current": self.current,
            "first_customer": self.first_customer, "origin_depot": self.origin_depot,
            "load": self.load, "backhaul_load": self.backhaul_load, "clock": self.clock,
            "route_length": self.route_length, "collected_prize": self.collected_prize,
            "phase": self.route_phase, "at_depot": self.at_depot, "done": self.done,
            "travel": self.travel, "route_size": self.route_size, "pending": self.pending,
            "can_relocate": self.can_relocate,
        }


@dataclass(frozen=True)
class ObjectiveResult:
    value: float
    sense: str
    components: dict = field(default_factory=dict)


# a few instances are touched repeatedly by the scalar API; keep their stacked arrays
_STATIC_CACHE: OrderedDict = OrderedDict()


def static_for(instance) -> EnvStatic:
    key = id(instance)
    hit = _STATIC_CACHE.get(key)
    if hit is not None and hit[0] is instance:
        _STATIC_CACHE.move_to_end(key)
        return hit[1]
    static = EnvStatic([instance])
    _STATIC_CACHE[key] = (instance, static)
    while len(_STATIC_CACHE) > 64:
        _STATIC_CACHE.popitem(last=False)
    return static


def _to_env(instance, state: StepState) -> BatchEnv:
    static = static_for(instance)
    env = BatchEnv.blank(static, np.zeros(1, dtype=np.int64))
    env.vis[0, list(state.visited)] = True
    env.fs[0] = (state.load, state.backhaul_load, state.clock, state.route_length,
                 state.collected_prize, state.travel)
    env.st[0] = (
        state.current,
        -1 if state.first_customer is None else state.first_customer,
        -1 if state.origin_depot is None else state.origin_depot,
        1 if state.route_phase == "backhaul" else 0,
        state.route_size, state.pending, int(state.at_depot), int(state.can_relocate), int(state.done),
    )
    return env


def _from_env(env: BatchEnv, row=0) -> StepState:
    fs, st = env.fs[row], env.st[row]
    return StepState(
        visited=frozenset(int(i) for i in np.nonzero(env.vis[row])[0]),
        current=int(st[K.CUR]),
        first_customer=None if st[K.FIRST] < 0 else int(st[K.FIRST]),
        origin_depot=None if st[K.ORIGIN] < 0 else int(st[K.ORIGIN]),
        load=float(fs[K.LOAD]), backhaul_load=float(fs[K.BLOAD]), clock=float(fs[K.CLOCK]),
        route_length=float(fs[K.RLEN]), collected_prize=float(fs[K.PRIZE]),
        route_phase="backhaul" if st[K.PHASE] else "linehaul",
        at_depot=bool(st[K.ATDEPOT]), done=bool(st[K.DONE]), travel=float(fs[K.TRAVEL]),
        route_size=int(st[K.NROUTE]), pending=int(st[K.PENDING]), can_relocate=bool(st[K.RELOC]),
    )


def depot_state(instance, depot: int) -> StepState:
    """Fresh state standing at ``depot`` before any customer is chosen."""
    if not 0 <= depot < instance.spec.depot_count:
        raise ValueError(f"{depot} is not a depot index")
    env = BatchEnv.at_depot(static_for(instance), np.zeros(1, np.int64), np.array([depot]))
    return _from_env(env)


def initial_state(instance, origin_depot, first_node) -> StepState:
    dc = instance.spec.depot_count
    if (origin_depot is None) != (dc == 0):
        raise ValueError("origin_depot must be given exactly when the instance has depots")
    if not 0 <= first_node < instance.n_nodes:
        raise ValueError(f"first node {first_node} out of range")
    if dc and first_node < dc:
        pdtsp = instance.spec.families >= {"PD"} and "C" not in instance.spec.families
        if not (pdtsp and first_node == origin_depot):
            raise InfeasibleStart("the first node must be a customer")
    static = static_for(instance)
    env = BatchEnv.start(static, np.zeros(1, np.int64), [origin_depot if dc else 0], [first_node])
    return _from_env(env)


def feasible_mask(instance, state: StepState):
    if state.done:
        raise ValueError("state is terminal")
    return _to_env(instance, state).mask()[0].copy()


def apply_action(instance, state: StepState, node: int) -> StepState:
    env = _to_env(instance, state)
    if state.done:
        raise MaskViolation("state is terminal")
    if not 0 <= node < instance.n_nodes or not env.mask()[0, node]:
        raise MaskViolation(f"node {node} is masked in the current state")
    env.step(np.array([node]))
    return _from_env(env)


def replay(instance, solution):
    """Drive the mask along ``solution``; returns (final state, first masked step or None)."""
    seq = [int(x) for x in solution]
    dc = instance.spec.depot_count
    if not seq:
        return None, 0
    if dc == 0:
        state = initial_state(instance, None, seq[0])
    else:
        if not 0 <= seq[0] < dc:
            return None, 0
        state = depot_state(instance, seq[0])
        if len(seq) == 1 and instance.spec.families & {"OP", "PC"}:
            seq = seq + seq[:1]
    for t in range(1, len(seq)):
        if state.done:
            return state, t
        m = feasible_mask(instance, state)
        if not 0 <= seq[t] < len(m) or not m[seq[t]]:
            return state, t
        state = apply_action(instance, state, seq[t])
    return state, None


def evaluate_solution(instance, solution) -> ObjectiveResult:
    """Objective of a node sequence (defined for infeasible sequences too)."""
    seq = [int(x) for x in solution]
    fam = instance.spec.families
    dc = instance.spec.depot_count
    d = instance.dist
    travel = 0.0
    for a, b in zip(seq, seq[1:]):
        if a < dc and b < dc:
            continue  # relocation between depots is free; repeated depot is a no-op
        if "O" in fam and b < dc:
            continue
        travel += d[a, b]
    if dc == 0 and len(seq) > 1:
        travel += d[seq[-1], seq[0]]
    visited = {i for i in seq if i >= dc}
    prize = float(sum(instance.omega[i, 1] for i in sorted(visited)))
    penalty = 0.0
    if "PC" in fam:
        penalty = float(sum(instance.omega[i, 2] for i in range(dc, instance.n_nodes) if i not in visited))
    comps = {"travel": float(travel), "penalty": penalty, "prize": prize}
    if "OP" in fam:
        return ObjectiveResult(prize, "maximize", comps)
    return ObjectiveResult(float(travel) + penalty, "minimize", comps)


__all__ = [
    "StepState", "ObjectiveResult", "MaskViolation", "InfeasibleStart", "initial_state", "depot_state",
    "feasible_mask", "apply_action", "evaluate_solution", "replay", "static_for",
]
