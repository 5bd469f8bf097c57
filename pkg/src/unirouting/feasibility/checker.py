"""Authoritative solution checker.

Written against the rule catalog, not against the mask kernels: the sequence
is split into routes and every rule is checked on the routes directly.  The
property tests compare this module with mask replay; any disagreement is a bug
in one of the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

EPS = 1e-9

RULES = (
    "index-range", "start", "visit-once", "capacity", "backhaul-capacity", "duration",
    "time-window", "depot-return", "bp-precedence", "first-linehaul", "pd-precedence",
    "pd-pending", "same-depot", "empty-route", "relocation", "prize-threshold",
    "max-length", "single-tour", "termination", "completeness",
)


@dataclass
class Violation:
    rule: str
    step: int
    detail: str = ""


@dataclass
class CheckReport:
    violations: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def rules(self) -> set:
        return {v.rule for v in self.violations}

    def add(self, rule, step, detail=""):
        self.violations.append(Violation(rule, step, detail))


@dataclass
class _Route:
    depot: int
    start_step: int
    stops: list = field(default_factory=list)   # (node, step)
    closed_at: int | None = None


def _check_tsp(inst, seq, rep, partial):
    n = inst.n_nodes
    seen = {}
    for t, v in enumerate(seq):
        if v in seen:
            rep.add("visit-once", t, f"node {v} repeated (first at step {seen[v]})")
        else:
            seen[v] = t
    if not partial and len(seen) < n:
        rep.add("completeness", len(seq), f"{n - len(seen)} nodes never visited")


def _split(inst, seq, rep, single, open_route, multi_depot):
    """Parse a depot-rooted sequence into routes, reporting structural problems."""
    dc = inst.spec.depot_count
    routes = []
    origin = seq[0]
    cur = _Route(origin, 0)
    closed_last = True  # the start counts as "after a closure" for relocation
    relocated = False
    for t in range(1, len(seq)):
        v = seq[t]
        if v >= dc:
            cur.stops.append((v, t))
            closed_last = False
            relocated = False
            continue
        if cur.stops:
            if v != cur.depot:
                rep.add("same-depot", t, f"route from depot {cur.depot} returns to {v}")
            cur.closed_at = t
            routes.append(cur)
            cur = _Route(v, t)
            closed_last = True
            relocated = False
            continue
        # depot reached from a depot
        if single and not routes:
            if v != cur.depot:
                rep.add("same-depot", t, "tour must close at its start depot")
            cur.closed_at = t
            routes.append(cur)
            cur = _Route(v, t)
            continue
        if v == cur.depot:
            rep.add("empty-route", t, f"depot {v} selected twice in a row")
        elif not multi_depot:
            rep.add("relocation", t, "switching depots needs multiple depots")
        elif relocated or not closed_last:
            rep.add("relocation", t, "only one relocation allowed between routes")
        relocated = True
        cur = _Route(v, t)
    if cur.stops or not routes:
        routes.append(cur)
    return routes


def check_solution(instance, solution, partial=False) -> CheckReport:
    """Report every rule the sequence violates.

    ``partial=True`` skips completeness and termination rules so that a
    prefix (or a single route) can be checked on its own.
    """
    rep = CheckReport()
    spec = instance.spec
    fam, p = spec.families, spec.params
    n_nodes, dc = instance.n_nodes, spec.depot_count
    seq = [int(x) for x in solution]
    for t, v in enumerate(seq):
        if not 0 <= v < n_nodes:
            rep.add("index-range", t, f"node {v} outside 0..{n_nodes - 1}")
    if rep.violations:
        return rep
    if not seq:
        rep.add("start", 0, "empty sequence")
        return rep
    if dc == 0:
        _check_tsp(instance, seq, rep, partial)
        return rep
    if seq[0] >= dc:
        rep.add("start", 0, f"sequence must start at a depot, got {seq[0]}")
        return rep

    d = instance.dist
    om = instance.omega
    pair = instance.pair
    single = bool(fam & {"OP", "PC"}) or ("PD" in fam and "C" not in fam)
    open_route = "O" in fam
    routes = _split(instance, seq, rep, single, open_route, "MD" in fam)

    if single and len(routes) > 1:
        rep.add("single-tour", routes[1].start_step, "only one tour is allowed")

    customers = set(range(dc, n_nodes))
    visited_at = {}
    for route in routes:
        for v, t in route.stops:
            if v in visited_at:
                rep.add("visit-once", t, f"customer {v} repeated (first at step {visited_at[v]})")
            else:
                visited_at[v] = t

    linehauls = {j for j in customers if om[j, 0] > 0} if "C" in fam and "PD" not in fam else set()
    served = set()
    for ri, route in enumerate(routes):
        k = route.depot
        stops = route.stops
        last_route = ri == len(routes) - 1
        # a final open route may simply end; every other route must be closed
        if route.closed_at is None and stops and not (open_route and last_route) and not partial:
            rep.add("depot-return", len(seq), f"route from depot {k} never returns")
        length = 0.0
        clock = 0.0
        prev = k
        delivered = 0.0
        collected = 0.0
        carried = 0.0
        seen_backhaul = False
        onboard = set()
        for pos, (v, t) in enumerate(stops):
            leg = d[prev, v]
            length += leg
            dem = om[v, 0]
            if "PD" in fam:
                partner = pair[v]
                if partner > v:
                    onboard.add(v)
                    carried += -dem
                else:
                    if partner not in onboard:
                        rep.add("pd-precedence", t, f"delivery {v} before its pickup {partner} on this route")
                    onboard.discard(partner)
                    carried -= dem
                if "C" in fam and carried > 1.0 + EPS:
                    rep.add("capacity", t, f"carried load {carried:.6g} exceeds capacity")
            elif "C" in fam:
                if dem > 0:
                    if seen_backhaul and "BP" in fam:
                        rep.add("bp-precedence", t, f"linehaul {v} after a backhaul")
                    delivered += dem
                    if delivered > 1.0 + EPS:
                        rep.add("capacity", t, f"linehaul demand {delivered:.6g} exceeds capacity")
                elif dem < 0:
                    if pos == 0 and "B" in fam and linehauls - served:
                        rep.add("first-linehaul", t, f"route starts with backhaul {v} while linehauls remain")
                    seen_backhaul = True
                    collected += -dem
                    if collected > 1.0 + EPS:
                        rep.add("backhaul-capacity", t, f"backhaul load {collected:.6g} exceeds capacity")
            if "TW" in fam:
                arrival = clock + leg
                if arrival > om[v, 4] + EPS:
                    rep.add("time-window", t, f"arrive {arrival:.6g} after window end {om[v, 4]:.6g}")
                clock = max(arrival, om[v, 3]) + om[v, 5]
            served.add(v)
            prev = v
        if not stops:
            continue
        back = 0.0 if open_route else d[prev, k]
        if "L" in fam and length + back > p["duration_limit"] + EPS:
            rep.add("duration", stops[-1][1], f"route length {length + back:.6g} over limit")
        if "TW" in fam and not open_route and clock + d[prev, k] > p["depot_end_time"] + EPS:
            rep.add("time-window", stops[-1][1], "cannot return before the depot closes")
        if "OP" in fam and length + d[prev, k] > p["max_tour_length"] + EPS:
            rep.add("max-length", stops[-1][1], f"tour length {length + d[prev, k]:.6g} over budget")
        if "PD" in fam and onboard and (route.closed_at is not None or not partial):
            rep.add("pd-pending", route.closed_at if route.closed_at is not None else len(seq),
                    f"pickups {sorted(onboard)} never delivered")

    if partial:
        return rep

    # termination
    missing = customers - set(visited_at)
    if "PC" in fam:
        prize = sum(om[j, 1] for j in visited_at)
        if missing and prize < p["required_prize"] - EPS:
            rep.add("prize-threshold", len(seq), f"collected {prize:.6g} < required {p['required_prize']}")
    elif "OP" not in fam and missing:
        rep.add("completeness", len(seq), f"{len(missing)} customers never visited")
    if single:
        if len(seq) > 1 and routes[0].closed_at is None:
            rep.add("termination", len(seq), "tour never returns to the depot")
        if routes and routes[0].closed_at is not None and routes[0].closed_at < len(seq) - 1:
            rep.add("termination", routes[0].closed_at + 1, "sequence continues after the tour closed")
    else:
        # the construction stops as soon as the last customer is served (open)
        # or the route that served it has closed
        done_at = None
        if not missing:
            last_customer_step = max(visited_at.values())
            if open_route:
                done_at = last_customer_step
            else:
                for route in routes:
                    if route.stops and route.stops[-1][1] == last_customer_step:
                        done_at = route.closed_at
        if done_at is not None and done_at < len(seq) - 1:
            rep.add("termination", done_at + 1, "sequence continues after completion")
    return rep


__all__ = ["CheckReport", "Violation", "RULES", "check_solution"]
