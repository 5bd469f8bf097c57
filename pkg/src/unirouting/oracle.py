"""Exact reference solver for tiny instances, greedy baseline and gap arithmetic."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .feasibility import kernels as K
from .feasibility.batch import BatchEnv, EnvStatic
from .feasibility.checker import check_solution
from .feasibility.engine import ObjectiveResult, evaluate_solution
from .feasibility.rollout import Trace, run

EXACT_MAX_CUSTOMERS = 12


@dataclass
class OracleResult:
    solution: list
    objective: ObjectiveResult
    nodes_expanded: int
    elapsed_ms: int


class OracleError(ValueError):
    pass


def gap(value: float, reference: float, sense: str) -> float:
    """Percentage gap; negative when ``value`` beats ``reference``."""
    if reference == 0:
        raise OracleError("gap is undefined for a zero reference")
    if sense in ("min", "minimize"):
        return (value - reference) / reference * 100.0
    if sense in ("max", "maximize"):
        return (reference - value) / reference * 100.0
    raise OracleError(f"unknown sense {sense!r}")


def _result(instance, seq, expanded, t0):
    if len(seq) == 2 and seq[0] == seq[1]:
        seq = seq[:1]  # a tour that never leaves the depot
    obj = evaluate_solution(instance, seq)
    return OracleResult(list(seq), obj, int(expanded), int((time.perf_counter() - t0) * 1000))


# ----------------------------------------------------------------- greedy

def greedy_solve(instance) -> OracleResult:
    """Nearest feasible customer first; a depot only when no customer is selectable."""
    t0 = time.perf_counter()
    static = EnvStatic([instance])
    dc = static.dc

    def choose(env, mask, live):
        d = static.dist[env.inst, env.current].copy()
        cust = mask.copy()
        cust[:, :dc] = False
        use = np.where(cust.any(1, keepdims=True), cust, mask)
        d[~use] = np.inf
        return d.argmin(1)

    if dc == 0:
        env = BatchEnv.start(static, np.zeros(1, np.int64), [0], [0])
        trace = Trace(env, [0], [0])
    else:
        env = BatchEnv.at_depot(static, np.zeros(1, np.int64), np.array([0]))
        trace = Trace(env, [0], [0])
    dead = run(env, choose, trace)
    if dead[0]:
        raise OracleError("greedy construction hit a dead end")
    seq = trace.sequences()[0]
    return _result(instance, seq, len(seq), t0)


# ----------------------------------------------------------------- Held-Karp

def held_karp(dist):
    """Optimal closed tour over all nodes starting at node 0; returns (length, order)."""
    d = np.asarray(dist, dtype=np.float64)
    n = d.shape[0]
    if n == 1:
        return 0.0, [0]
    m = n - 1
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    inner = d[1:, 1:]
    for s in range(1, full):
        row = dp[s]
        if not np.isfinite(row).any():
            continue
        # extend every end node j in s to every k outside s
        cand = row[:, None] + inner  # (j, k)
        best_j = cand.argmin(0)
        best = cand[best_j, np.arange(m)]
        for k in range(m):
            if s >> k & 1:
                continue
            t = s | (1 << k)
            if best[k] < dp[t, k]:
                dp[t, k] = best[k]
                parent[t, k] = best_j[k]
    last = dp[full - 1] + d[1:, 0]
    j = int(last.argmin())
    length = float(last[j])
    order = []
    s = full - 1
    while j >= 0:
        order.append(j + 1)
        pj = int(parent[s, j])
        s &= ~(1 << j)
        j = pj
    return length, [0] + order[::-1]


# ----------------------------------------------------------------- exact search

def _group_first(keys, score):
    """Row index of the best score within each distinct key (first on ties)."""
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.lexsort((np.arange(len(score)), score, inv))
    g = inv[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = g[1:] != g[:-1]
    return np.sort(order[first])


def _state_keys(env, fam, drop_rlen):
    q = lambda x: np.round(x * 1e9).astype(np.int64)
    cols = [np.packbits(env.vis, axis=1).astype(np.int64),
            env.st[:, [K.CUR, K.ORIGIN, K.PHASE, K.PENDING, K.ATDEPOT, K.RELOC]],
            (env.st[:, [K.NROUTE]] > 0).astype(np.int64),
            q(env.fs[:, [K.LOAD, K.BLOAD]])]
    if "TW" in fam:
        cols.append(q(env.fs[:, [K.CLOCK]]))
    if ("L" in fam or "OP" in fam) and not drop_rlen:
        cols.append(q(env.fs[:, [K.RLEN]]))
    return np.concatenate(cols, axis=1)


def exact_solve(instance, max_states=5_000_000) -> OracleResult:
    """Optimum over the masked action space (breadth-first branch and bound).

    Frontier states with identical future options are merged, keeping the
    cheapest partial solution; plain TSP/ATSP go through Held-Karp.
    """
    spec = instance.spec
    if spec.n_customers > EXACT_MAX_CUSTOMERS:
        raise OracleError(f"exact solver is capped at {EXACT_MAX_CUSTOMERS} customers, got {spec.n_customers}")
    t0 = time.perf_counter()
    fam = spec.families
    if fam <= {"A"}:
        _, order = held_karp(instance.dist)
        return _result(instance, order, 1 << max(instance.n_nodes - 1, 0), t0)

    static = EnvStatic([instance])
    maximize = static.maximize
    greedy = greedy_solve(instance)
    best_val = greedy.objective.value
    best_seq = greedy.solution
    found_better = False
    prizes = static.om[0, :, K.PRZ]

    starts = np.arange(spec.depot_count) if "MD" in fam else np.array([0])
    env = BatchEnv.at_depot(static, np.zeros(len(starts), np.int64), starts)
    env.st[:, K.RELOC] = 0 if "MD" in fam else env.st[:, K.RELOC]
    parent = [np.full(len(starts), -1, dtype=np.int64)]
    action = [starts.copy()]
    ids = np.arange(len(starts))
    n_ids = len(starts)
    expanded = 0
    best_node = None
    # OP keeps the shortest partial tour per state; length is then not a key
    drop_rlen = maximize and "L" not in fam

    while env.n_rows:
        mask = env.mask()
        rows, acts = np.nonzero(mask)
        if rows.size == 0:
            break
        expanded += rows.size
        if expanded > max_states:
            raise OracleError(f"search exceeded {max_states} states")
        child = env.take(rows)
        child.step(acts)
        new_ids = np.arange(n_ids, n_ids + rows.size)
        parent.append(ids[rows])
        action.append(acts)
        n_ids += rows.size

        obj = child.objective()
        if maximize:
            unvisited = np.where(child.vis, 0.0, prizes[None, :]).sum(1)
            keep = obj + unvisited >= best_val - 1e-9
        else:
            keep = child.fs[:, K.TRAVEL] <= best_val + 1e-9
        done = child.done
        fin = np.nonzero(done & keep)[0]
        if fin.size:
            vals = obj[fin]
            i = int(vals.argmax() if maximize else vals.argmin())
            v = float(vals[i])
            better = v > best_val + 1e-12 if maximize else v < best_val - 1e-12
            if better or (not found_better and abs(v - best_val) <= 1e-12):
                best_val, best_node, found_better = v, int(new_ids[fin[i]]), True
        live = np.nonzero(keep & ~done)[0]
        child = child.take(live)
        live_ids = new_ids[live]
        if child.n_rows:
            score = child.fs[:, K.RLEN] if maximize else child.fs[:, K.TRAVEL]
            sel = _group_first(_state_keys(child, fam, drop_rlen), score)
            child = child.take(sel)
            live_ids = live_ids[sel]
        env, ids = child, live_ids

    if best_node is not None:
        par = np.concatenate(parent)
        act = np.concatenate(action)
        seq = []
        node = best_node
        while node >= 0:
            seq.append(int(act[node]))
            node = int(par[node])
        best_seq = seq[::-1]
    res = _result(instance, best_seq, expanded, t0)
    if not check_solution(instance, res.solution).feasible:
        raise OracleError("exact search produced an infeasible sequence")
    return res


__all__ = ["OracleResult", "OracleError", "gap", "greedy_solve", "exact_solve", "held_karp",
           "EXACT_MAX_CUSTOMERS"]
