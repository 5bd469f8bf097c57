"""Independent brute-force references for the exact solver.

Nothing here touches the mask kernels or the checker: routes are scored by
straight-line loops over explicit permutations.
"""

import itertools
import math

EPS = 1e-9


def tour_length(d, order, close=True):
    total = sum(d[a][b] for a, b in zip(order, order[1:]))
    if close and len(order) > 1:
        total += d[order[-1]][order[0]]
    return total


def tsp(d):
    n = len(d)
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        best = min(best, tour_length(d, (0,) + perm))
    return best if n > 1 else 0.0


def _route_cost(inst, route):
    """Cost of a closed depot-0 route, or None if any rule fails."""
    fam, p = inst.spec.families, inst.spec.params
    d, om = inst.dist, inst.omega
    if "C" in fam and sum(om[j, 0] for j in route) > 1.0 + EPS:
        return None
    t = 0.0
    length = 0.0
    prev = 0
    for j in route:
        leg = d[prev, j]
        length += leg
        if "TW" in fam:
            arrive = t + leg
            if arrive > om[j, 4] + EPS:
                return None
            t = max(arrive, om[j, 3]) + om[j, 5]
        prev = j
    length += d[prev, 0]
    if "TW" in fam and t + d[prev, 0] > p["depot_end_time"] + EPS:
        return None
    if "L" in fam and length > p["duration_limit"] + EPS:
        return None
    return length


def vrp(inst):
    """Set-partition over customers, best permutation per route."""
    cust = list(range(inst.spec.depot_count, inst.n_nodes))
    m = len(cust)
    route_best = {}
    for mask in range(1, 1 << m):
        members = [cust[i] for i in range(m) if mask >> i & 1]
        best = math.inf
        for perm in itertools.permutations(members):
            c = _route_cost(inst, perm)
            if c is not None and c < best:
                best = c
        route_best[mask] = best
    best = [math.inf] * (1 << m)
    best[0] = 0.0
    for s in range(1, 1 << m):
        low = s & -s
        sub = s
        while sub:
            if sub & low and route_best[sub] < math.inf:
                cand = route_best[sub] + best[s ^ sub]
                if cand < best[s]:
                    best[s] = cand
            sub = (sub - 1) & s
    return best[(1 << m) - 1]


def _ordered_subsets(items):
    for k in range(len(items) + 1):
        for combo in itertools.combinations(items, k):
            for perm in itertools.permutations(combo):
                yield perm


def op(inst):
    d, om = inst.dist, inst.omega
    budget = inst.spec.params["max_tour_length"]
    best = 0.0
    for perm in _ordered_subsets(list(range(1, inst.n_nodes))):
        if not perm:
            continue
        if tour_length(d, (0,) + perm) <= budget + EPS:
            best = max(best, sum(om[j, 1] for j in perm))
    return best


def pctsp(inst):
    d, om = inst.dist, inst.omega
    req = inst.spec.params["required_prize"]
    cust = list(range(1, inst.n_nodes))
    best = math.inf
    for perm in _ordered_subsets(cust):
        prize = sum(om[j, 1] for j in perm)
        if prize < req - EPS and len(perm) < len(cust):
            continue
        cost = tour_length(d, (0,) + perm) + sum(om[j, 2] for j in cust if j not in perm)
        best = min(best, cost)
    return best


def pdtsp(inst):
    d = inst.dist
    n = inst.spec.n_customers
    half = n // 2
    best = math.inf
    for perm in itertools.permutations(range(1, n + 1)):
        pos = {v: i for i, v in enumerate(perm)}
        if all(pos[i] < pos[i + half] for i in range(1, half + 1)):
            best = min(best, tour_length(d, (0,) + perm))
    return best


def solve(inst):
    """Optimal objective value by brute force."""
    fam = inst.spec.families
    if fam <= {"A"}:
        return tsp(inst.dist)
    if "OP" in fam:
        return op(inst)
    if "PC" in fam:
        return pctsp(inst)
    if "PD" in fam and "C" not in fam:
        return pdtsp(inst)
    if fam - {"C", "TW", "L", "A"}:
        raise NotImplementedError(sorted(fam))
    return vrp(inst)
