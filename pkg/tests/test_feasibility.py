import numpy as np
import pytest

from unirouting import _accel
from unirouting.feasibility import (
    InfeasibleStart,
    MaskViolation,
    StepState,
    apply_action,
    check_solution,
    depot_state,
    evaluate_solution,
    feasible_mask,
    initial_state,
    random_rollouts,
    replay,
)
from unirouting.instance import euclidean, generate_instance
from unirouting.oracle import greedy_solve
from unirouting.variants import SEEN_VARIANTS, make_spec


def placed(name, xy, omega=None, **params):
    """Instance of ``name`` with hand-set coordinates (and attribute columns)."""
    xy = np.asarray(xy, dtype=float)
    spec = make_spec(name, len(xy) - make_spec(name, 2, **params).depot_count, **params)
    base = generate_instance(spec, 0)
    rho = np.zeros((len(xy), 3))
    rho[:, 1:] = xy
    om = base.omega.copy() if omega is None else np.asarray(omega, dtype=float)
    return base.replace(rho=rho, dist=euclidean(xy), omega=om)


CORNERS = [[0, 0], [1, 0], [1, 1], [0, 1]]


def test_tsp_initial_state():
    inst = generate_instance(make_spec("TSP", 5), 0)
    s = initial_state(inst, None, 2)
    assert s.visited == {2} and s.current == 2
    assert s.route_length == 0 and s.clock == 0 and s.collected_prize == 0


def test_cvrp_initial_state():
    om = np.zeros((4, 6))
    om[1:, 0] = [0.1, 0.2, 0.3]
    inst = placed("CVRP", [[0, 0], [0.3, 0.4], [1, 1], [0, 1]], om)
    s = initial_state(inst, 0, 1)
    assert s.load == pytest.approx(0.9)
    assert s.route_length == pytest.approx(0.5)


def test_cvrpb_rejects_backhaul_first():
    inst = generate_instance(make_spec("CVRPB", 10), 0)
    back = int(np.nonzero(inst.omega[:, 0] < 0)[0][0])
    with pytest.raises(InfeasibleStart):
        initial_state(inst, 0, back)


def test_capacity_mask():
    om = np.zeros((5, 6))
    om[1:, 0] = [0.5, 0.10, 0.04, 0.14]
    inst = placed("CVRP", [[0, 0], [0.1, 0], [0.2, 0], [0.3, 0], [0.4, 0]], om)
    s = StepState(visited=frozenset({1}), current=1, first_customer=1, origin_depot=0, load=0.04, route_size=1)
    assert list(feasible_mask(inst, s)) == [True, False, False, True, False]


def test_bp_linehauls_masked_after_backhaul():
    inst = generate_instance(make_spec("CVRPBP", 10), 3)
    dem = inst.omega[:, 0]
    line = [j for j in inst.customers if dem[j] > 0]
    back = [j for j in inst.customers if dem[j] < 0]
    s = initial_state(inst, 0, line[0])
    s = apply_action(inst, s, back[0])
    m = feasible_mask(inst, s)
    assert not m[line[1:]].any()
    assert m[0]
    s = apply_action(inst, s, 0)
    assert feasible_mask(inst, s)[line[1:]].all()


def test_pdtsp_delivery_waits_for_pickup():
    inst = generate_instance(make_spec("PDTSP", 6), 1)
    s = depot_state(inst, 0)
    m = feasible_mask(inst, s)
    assert m[1:4].all() and not m[4:7].any()
    s = apply_action(inst, s, 2)
    assert feasible_mask(inst, s)[5]


def test_tsp_last_node():
    inst = generate_instance(make_spec("TSP", 5), 0)
    s = initial_state(inst, None, 0)
    for j in (1, 2, 3):
        s = apply_action(inst, s, j)
    assert list(feasible_mask(inst, s)) == [False, False, False, False, True]
    with pytest.raises(MaskViolation):
        apply_action(inst, s, 2)


def test_waiting_at_time_window():
    om = np.zeros((3, 6))
    om[0, 4] = 3.0
    om[1] = [0.02, 0, 0, 0.5, 1.2, 0.2]
    om[2] = [0.02, 0, 0, 0.0, 2.5, 0.2]
    inst = placed("CVRPTW", [[0, 0], [0.4, 0], [0.8, 0]], om)
    s = initial_state(inst, 0, 1)
    assert s.clock == pytest.approx(0.7)


def test_depot_resets_route():
    inst = generate_instance(make_spec("CVRP", 6), 0)
    s = initial_state(inst, 0, 3)
    s = apply_action(inst, s, 0)
    assert s.load == 1.0 and s.route_length == 0.0 and not s.done


def test_op_depot_ends_tour():
    inst = generate_instance(make_spec("OP", 10), 0)
    s = initial_state(inst, 0, 1)
    s = apply_action(inst, s, 0)
    assert s.done and len(s.visited - {0}) == 1


def test_open_and_closed_objectives():
    inst = placed("TSP", CORNERS)
    assert evaluate_solution(inst, [0, 1, 2, 3]).value == pytest.approx(4.0)
    closed = placed("CVRP", [[0, 0], [1, 0], [1, 1], [0, 1]])
    opened = placed("OCVRP", [[0, 0], [1, 0], [1, 1], [0, 1]])
    seq = [0, 1, 2, 3, 0]
    assert evaluate_solution(opened, seq).value == pytest.approx(
        evaluate_solution(closed, seq).value - closed.dist[3, 0])


def test_pctsp_penalties():
    inst = generate_instance(make_spec("PCTSP", 8), 2)
    res = evaluate_solution(inst, [0])
    assert res.value == pytest.approx(inst.omega[1:, 2].sum())
    assert evaluate_solution(generate_instance(make_spec("OP", 8), 1), [0]).sense == "maximize"


def test_checker_accepts_greedy():
    inst = generate_instance(make_spec("CVRP", 8), 4)
    rep = check_solution(inst, greedy_solve(inst).solution)
    assert rep.feasible and not rep.violations


def test_checker_flags_repeat():
    inst = generate_instance(make_spec("TSP", 5), 0)
    rep = check_solution(inst, [0, 1, 2, 1, 3, 4])
    assert "visit-once" in rep.rules
    assert [v.step for v in rep.violations if v.rule == "visit-once"] == [3]


def test_checker_flags_bp_order():
    inst = generate_instance(make_spec("CVRPBP", 10), 3)
    dem = inst.omega[:, 0]
    line = [j for j in inst.customers if dem[j] > 0]
    back = [j for j in inst.customers if dem[j] < 0]
    rep = check_solution(inst, [0, line[0], back[0], line[1], 0], partial=True)
    assert rep.rules == {"bp-precedence"}


def test_checker_other_rules():
    inst = generate_instance(make_spec("CVRP", 4), 0)
    assert "start" in check_solution(inst, [1, 2, 3, 4, 0]).rules
    assert "completeness" in check_solution(inst, [0, 1, 2, 0]).rules
    assert "index-range" in check_solution(inst, [0, 9]).rules
    assert "empty-route" in check_solution(inst, [0, 0, 1, 2, 3, 4, 0]).rules
    assert "termination" in check_solution(inst, [0, 1, 2, 3, 4, 0, 1]).rules - {"visit-once"}
    pd = generate_instance(make_spec("PDTSP", 4), 0)
    assert "pd-precedence" in check_solution(pd, [0, 3, 1, 4, 2, 0]).rules


@pytest.mark.parametrize("name", SEEN_VARIANTS + ("CVRPBLTW", "MDOCVRPB", "PDCVRP", "ACVRPLTW", "OCVRPBPTW"))
def test_random_rollouts_agree_with_checker(name):
    insts = [generate_instance(make_spec(name, 8), s) for s in range(4)]
    seqs, objs, dead = random_rollouts(insts, 8, seed=1)
    assert not dead.any()
    for r, seq in enumerate(seqs):
        inst = insts[r // 8]
        assert check_solution(inst, seq).feasible, (name, seq)
        assert evaluate_solution(inst, seq).value == pytest.approx(objs[r], abs=1e-9)
        state, bad = replay(inst, seq)
        assert bad is None and state.done


@pytest.mark.parametrize("name", ["CVRPTW", "OCVRPBL", "MDCVRPBPTW", "APDCVRP", "PCTSP", "OP"])
def test_scalar_invariants(name):
    inst = generate_instance(make_spec(name, 8), 5)
    seqs, _, _ = random_rollouts([inst], 6, seed=2)
    fam, p = inst.spec.families, inst.spec.params
    for seq in seqs:
        s = depot_state(inst, seq[0])
        for v in seq[1:]:
            s = apply_action(inst, s, v)
            assert v in s.visited or v < inst.spec.depot_count
            assert -1e-9 <= s.load <= 1 + 1e-9 and -1e-9 <= s.backhaul_load <= 1 + 1e-9
            if "L" in fam:
                assert s.route_length <= p["duration_limit"] + 1e-9
            if "TW" in fam:
                assert s.clock <= p["depot_end_time"] + 1e-9


def test_backends_identical():
    insts = [generate_instance(make_spec(n, 10), 0) for n in ("CVRPBLTW", "MDOCVRPTW", "PDCVRP", "OP")]
    try:
        out = {}
        for b in ("numba", "numpy"):
            _accel.set_backend(b)
            out[b] = [random_rollouts([i], 16, seed=3) for i in insts]
    finally:
        _accel.set_backend("numba")
    for (sa, oa, da), (sb, ob, db) in zip(out["numba"], out["numpy"]):
        assert sa == sb and np.array_equal(oa, ob) and np.array_equal(da, db)


def test_backend_switch_validation():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")
