"""Acceptance criteria 1-12.  Each test prints one PASS/FAIL line."""

import time

import numpy as np
import torch

import oracles
from unirouting.evaluate import gaps_to_exact
from unirouting.feasibility import check_solution, evaluate_solution, random_rollouts
from unirouting.instance import (
    asymmetric_augmentations,
    derive_signature,
    generate_instance,
    symmetric_augmentations,
)
from unirouting.mask_synth import (
    ArtifactCache,
    CandidateProgram,
    StubProvider,
    make_task,
    synthesize,
    validate_candidate,
)
from unirouting.mask_synth import reference as ref
from unirouting.oracle import exact_solve, gap, greedy_solve
from unirouting.policy import PolicyConfig, UnifiedPolicy, aafm, aafm_naive, run_policy
from unirouting.policy.rollout import default_starts, encode_instances
from unirouting.training import profile, reinforce_loss, train
from unirouting.variants import SEEN_VARIANTS, catalog, make_spec

TABLE = {
    "ATSP": "1000000000000", "TSP": "0100000000000", "OP": "0101000010000",
    "PCTSP": "0101100010000", "PDTSP": "0100000011100", "ACVRP": "1010000010110",
    "CVRP": "0110000010110", "CVRPTW": "0110011110110", "CVRPB": "0110000011110",
    "OCVRP": "0110000010111", "OCVRPTW": "0110011110111",
}


def sweep(names, n, n_instances, per_instance, seed):
    """Random masked rollouts checked by the independent checker; returns (passed, total, failures)."""
    passed = total = 0
    failures = []
    for name in names:
        insts = [generate_instance(make_spec(name, n), seed + s) for s in range(n_instances)]
        seqs, _, dead = random_rollouts(insts, per_instance, seed=seed)
        for r, seq in enumerate(seqs):
            total += 1
            if not dead[r] and check_solution(insts[r // per_instance], seq).feasible:
                passed += 1
            elif len(failures) < 3:
                failures.append((name, seq))
    return passed, total, failures


def test_c01_mask_soundness(criterion):
    t0 = time.perf_counter()
    passed = total = 0
    bad = []
    for n in (10, 20):
        p, t, f = sweep(SEEN_VARIANTS, n, 50, 20, seed=100 + n)
        passed, total, bad = passed + p, total + t, bad + f
    wall = time.perf_counter() - t0
    ok = passed == total == 22 * 1000 and wall <= 300
    criterion(1, ok, f"{passed}/{total} rollouts feasible over 11 seen variants x n in (10, 20); "
                     f"{wall:.1f}s {bad[:1]}")


def test_c02_zero_shot_composition(criterion):
    unseen = [c for c in catalog() if c not in SEEN_VARIANTS] + ["OCVRPBPLTW"]
    for must in ("OCVRPBPLTW", "MDOCVRPB", "ACVRPL", "PDCVRP"):
        assert must in unseen
    p = make_spec("ACVRPL", 10).params
    assert p["duration_limit"] == 0.6
    assert make_spec("ACVRPLTW", 10).params["depot_end_time"] == 1.0
    t0 = time.perf_counter()
    passed, total, bad = sweep(unseen, 10, 25, 20, seed=7)
    wall = time.perf_counter() - t0
    ok = len(unseen) >= 20 and passed == total == 500 * len(unseen) and wall <= 300
    criterion(2, ok, f"{passed}/{total} rollouts feasible over {len(unseen)} unseen combinations at n=10; "
                     f"{wall:.1f}s {bad[:1]}")


def test_c03_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for name in ("TSP", "ATSP", "CVRP", "OP", "PCTSP", "PDTSP", "CVRPTW"):
        n = 6 if name == "PDTSP" else 7
        for seed in range(50):
            inst = generate_instance(make_spec(name, n), seed)
            worst = max(worst, abs(exact_solve(inst).objective.value - oracles.solve(inst)))
            count += 1
    wall = time.perf_counter() - t0
    criterion(3, worst <= 1e-9 and wall <= 600,
              f"{count} instances, max |exact - brute force| = {worst:.2e}; {wall:.1f}s")


def test_c04_aafm_exactness(criterion):
    g = torch.Generator().manual_seed(4)
    worst = 0.0
    for _ in range(1000):
        n = int(torch.randint(3, 17, (1,), generator=g))
        d = int(torch.randint(1, 17, (1,), generator=g))
        q, k, v = ((torch.rand(n, d, generator=g, dtype=torch.float64) * 2 - 1) * 5 for _ in range(3))
        A = (torch.rand(n, n, generator=g, dtype=torch.float64) * 2 - 1) * 5
        stable, naive = aafm(q, k, v, A), aafm_naive(q, k, v, A)
        worst = max(worst, float((stable - naive).abs().max() / naive.abs().max()))
    single = True
    for _ in range(100):
        q, k, v = ((torch.rand(1, 6, generator=g, dtype=torch.float64) * 2 - 1) * 5 for _ in range(3))
        A = (torch.rand(1, 1, generator=g, dtype=torch.float64) * 2 - 1) * 5
        single &= torch.equal(aafm(q, k, v, A), torch.sigmoid(q) * v)
    criterion(4, worst <= 1e-12 and single,
              f"max relative error {worst:.2e} over 1000 cases; single node exact: {single}")


def _policy_loss(model, instances):
    rb = run_policy(model, instances, default_starts(instances), "greedy")
    return rb.log_probs.sum(), rb.sequences


def test_c05_gradient_check(criterion):
    torch.manual_seed(0)
    model = UnifiedPolicy(PolicyConfig(d=8, L=1, ff=16, d_h=16), seed=11, dtype=torch.float64)
    # time windows exercise the context path; pickup-delivery exercises the relation branch
    batches = [[generate_instance(make_spec("CVRPTW", 5), 1)], [generate_instance(make_spec("PDTSP", 4), 1)]]

    def total():
        vals, seqs = zip(*(_policy_loss(model, b) for b in batches))
        return sum(vals), seqs

    loss, seqs = total()
    model.zero_grad()
    loss.backward()
    groups = {
        "embedding": ["W_rho", "W_omega", "W_xi"],
        "mbm": ["enc_Wq", "enc_Wk", "enc_Wv", "enc_Wo", "enc_ff_W1", "enc_ff_W2"],
        "bias_mlp": ["bias_W1", "bias_b1", "bias_W2", "bias_b2"],
        "hypernetwork": ["hyper_W1", "hyper_W2", "hyper_W3", "hyper_b3", "hyper_first", "hyper_K", "hyper_V"],
    }
    rng = np.random.default_rng(5)
    params = dict(model.named_parameters())
    checked, worst, branches = [], 0.0, set()
    for group, names in groups.items():
        for name in names:
            p = params[name]
            grad = p.grad.reshape(-1)
            # with a 1e-6 step the difference quotient carries ~1e-9 of rounding noise, so
            # relative error only means something for entries well above that floor
            live = np.nonzero(grad.abs().numpy() >= 1e-4)[0]
            if live.size == 0:
                continue
            picks = rng.choice(live, size=min(2, live.size), replace=False)
            if name.startswith("enc_W") and name != "enc_Wo":
                # one pick per attention branch
                per = grad.numel() // 3
                picks = []
                for b in range(3):
                    in_branch = live[(live >= b * per) & (live < (b + 1) * per)]
                    if in_branch.size:
                        picks.append(int(rng.choice(in_branch)))
                        branches.add(b)
            for idx in picks:
                flat = p.data.view(-1)
                keep = float(flat[idx])
                with torch.no_grad():
                    flat[idx] = keep + 1e-6
                    up, s_up = total()
                    flat[idx] = keep - 1e-6
                    down, s_down = total()
                    flat[idx] = keep
                assert s_up == seqs and s_down == seqs, "perturbation changed a greedy decision"
                fd = (float(up) - float(down)) / 2e-6
                an = float(grad[idx])
                rel = abs(an - fd) / max(abs(an), abs(fd))
                worst = max(worst, rel)
                checked.append((group, name, int(idx)))
    covered = {g for g, _, _ in checked}
    ok = len(checked) >= 20 and covered == set(groups) and branches == {0, 1, 2} and worst <= 1e-4
    criterion(5, ok, f"{len(checked)} parameters across {sorted(covered)}, MBM branches {sorted(branches)}; "
                     f"max relative error {worst:.2e}")


def test_c06_architecture(criterion):
    notes = []
    ok = True
    for d in (8, 128):
        m = UnifiedPolicy(PolicyConfig(d=d, L=1), seed=0)
        p = m.hyper_decoder_params(torch.rand(13))
        shapes = [tuple(p[k].shape) for k in ("W_first", "W_last", "W_C", "W_K", "W_V")]
        ok &= shapes == [(d, d), (d, d), (1, d), (d, d), (d, d)]
    notes.append("hyper shapes")
    lams = [derive_signature(generate_instance(make_spec(v, 10), 0)).array for v in SEEN_VARIANTS]
    rng = np.random.default_rng(6)
    lams += list(rng.integers(0, 2, (100, 13)).astype(np.float64))
    lam = torch.as_tensor(np.stack(lams), dtype=torch.float32)
    min_alpha = min(float(UnifiedPolicy(PolicyConfig(d=d, L=L), seed=s).bias_alphas(lam).min().detach())
                    for d, L, s in ((8, 1, 0), (128, 12, 1)))
    ok &= min_alpha >= 1.0
    # large generated weights push the compatibilities deep into the clipping range
    m = UnifiedPolicy(PolicyConfig(d=16, L=1), seed=2)
    with torch.no_grad():
        m.hyper_first.mul_(1e4)
        m.hyper_last.mul_(1e4)
    top, masked_zero, sums = 0.0, True, 0.0
    for name in ("CVRP", "ATSP", "OP"):
        insts = [generate_instance(make_spec(name, 10), s) for s in range(4)]
        nn_ = insts[0].n_nodes
        enc = encode_instances(m, insts)
        g = torch.Generator().manual_seed(0)
        for _ in range(5):
            mask = torch.rand(4, nn_, generator=g) < 0.5
            mask[:, 1] = True
            cur = torch.randint(0, nn_, (4,), generator=g)
            H = enc["H"]
            ar = torch.arange(4)
            with torch.no_grad():
                logits, lp = m.decode_logits(H, enc["K"], enc["V"], enc["dec"], H[ar, 0], H[ar, cur],
                                             torch.rand(4), enc["D"][ar, cur], mask, nn_)
            top = max(top, float(logits.abs().max()))
            masked_zero &= bool((lp.exp()[~mask] == 0).all())
            sums = max(sums, float((lp.exp().sum(-1) - 1).abs().max()))
    ok &= top <= 50.0 and masked_zero and sums <= 1e-5
    rows = {v: str(derive_signature(generate_instance(make_spec(v, 10), 3))) for v in SEEN_VARIANTS}
    ok &= rows == TABLE
    criterion(6, ok, f"shapes ok, min alpha {min_alpha:.4f} over 111 lambda, max |logit| {top:.4f}, "
                     f"masked prob 0: {masked_zero}, signature rows match: {rows == TABLE}")


def test_c07_baseline(criterion):
    model = UnifiedPolicy(PolicyConfig(d=8, L=1, ff=16, d_h=16), seed=3, dtype=torch.float64)
    insts = [generate_instance(make_spec("CVRP", 10), s) for s in range(8)]
    rb = run_policy(model, insts, default_starts(insts), "sample", torch.Generator().manual_seed(1))
    _, adv, _ = reinforce_loss(rb.rewards, rb.log_probs, rb.inst)
    worst = max(abs(adv[rb.inst == b].sum()) / np.abs(rb.rewards[rb.inst == b]).sum() for b in range(8))
    model.zero_grad()
    loss, _, _ = reinforce_loss(np.full(len(rb.rewards), -3.25), rb.log_probs, rb.inst)
    loss.backward()
    norm = float(torch.sqrt(sum((p.grad ** 2).sum() for p in model.parameters() if p.grad is not None)))
    criterion(7, worst <= 1e-6 and norm <= 1e-10,
              f"max relative |sum of advantages| {worst:.2e}; equal-reward gradient norm {norm:.2e}")


def test_c08_augmentation_isometry(criterion):
    worst_d = worst_obj = 0.0
    for name in ("TSP", "CVRP", "CVRPTW", "OP", "PDTSP"):
        for seed in range(10):
            inst = generate_instance(make_spec(name, 10), seed)
            tour = greedy_solve(inst).solution
            base = evaluate_solution(inst, tour).value
            augs = symmetric_augmentations(inst)
            assert len(augs) == 8
            for a in augs:
                xy = a.rho[:, 1:]
                pair = np.sqrt(((xy[:, None] - xy[None]) ** 2).sum(-1))
                worst_d = max(worst_d, float(np.abs(pair - inst.dist).max()))
                worst_obj = max(worst_obj, abs(evaluate_solution(a, tour).value - base))
    bitwise = all(a.dist.tobytes() == inst.dist.tobytes()
                  for s in range(10)
                  for inst in [generate_instance(make_spec("ATSP", 10), s)]
                  for a in asymmetric_augmentations(inst, 16))
    criterion(8, worst_d <= 1e-12 and worst_obj <= 1e-12 and bitwise,
              f"max distance change {worst_d:.2e}, max objective change {worst_obj:.2e}, "
              f"asymmetric D bitwise unchanged: {bitwise}")


def test_c09_desk_learning(criterion):
    cfg = profile("desk", max_steps=2000)
    evalset = [generate_instance(make_spec("TSP", 10), 10_000_000 + i) for i in range(100)]
    refs = [exact_solve(i).objective.value for i in evalset]
    untrained = UnifiedPolicy(cfg.policy_config(), seed=cfg.seed, dtype=cfg.dtype)
    before = float(np.mean(gaps_to_exact(untrained, evalset, references=refs)))
    t0 = time.perf_counter()
    res = train(cfg)
    wall = time.perf_counter() - t0
    after = float(np.mean(gaps_to_exact(res.model, evalset, references=refs)))
    steps = len(res.metrics)
    ok = steps == 2000 and after <= 5.0 and after <= 0.7 * before and wall <= 1800
    criterion(9, ok, f"{steps} steps in {wall / 60:.1f} min; mean gap untrained {before:.3f}% -> "
                     f"trained {after:.3f}%")


def test_c10_multitask_smoke(criterion):
    cfg = profile("desk", task_set=["TSP", "CVRP", "OP"], max_steps=1000)
    per_task = {}
    dead = 0

    def on_step(row, rb):
        nonlocal dead
        dead += int(rb.dead.sum())
        per_task.setdefault(row["task"], []).append(row["mean_reward"])

    res = train(cfg, on_step=on_step)
    finite = all(np.isfinite(r["loss"]) for r in res.metrics)
    feasible = dead == 0 and all(e["feasibility_rate"] == 1.0 for e in res.epochs)
    gains = {t: float(np.mean(v[-20:]) - v[0]) for t, v in sorted(per_task.items())}
    ok = (len(res.metrics) == 1000 and finite and feasible and set(gains) == {"TSP", "CVRP", "OP"}
          and all(g > 0 for g in gains.values()))
    criterion(10, ok, f"{len(res.metrics)} steps, finite losses: {finite}, feasibility 1.0: {feasible}, "
                      "reward gain vs first step " + ", ".join(f"{t} {g:+.4f}" for t, g in gains.items()))


def test_c11_mask_synthesis(criterion, tmp_path, capsys):
    from unirouting.cli import main

    t0 = time.perf_counter()
    task = make_task(make_spec("CVRP", 10))
    stub = StubProvider([ref.as_completion(ref.CVRP_MASK)])
    cache = ArtifactCache(tmp_path / "cache")
    art = synthesize(task, stub, cache)
    again = synthesize(task, stub, cache)
    accepted = art.accepted and art.validity_rate == 1.0 and again.cache_hit and stub.calls == art.provider_calls
    corpus = []
    for i, src in enumerate(ref.BROKEN):
        p = tmp_path / f"broken{i}.py"
        p.write_text(src)
        corpus += ["--corpus", str(p)]
    capsys.readouterr()
    code = main(["synth", "--spec", "CVRP", "--n", "10", "--cache", str(tmp_path / "c2"), "--rounds", "2",
                 "--candidates", "2", *corpus])
    out = capsys.readouterr().out
    exhausted = code == 2 and "best validity 0.0000" in out
    small = make_task(make_spec("TSP", 8), n_instances=2, rollouts=2, timeout_ms=300)
    zeros = [validate_candidate(CandidateProgram(src), small).validity_rate for src in (ref.CRASHES, ref.LOOPS)]
    wall = time.perf_counter() - t0
    ok = accepted and exhausted and zeros == [0.0, 0.0] and wall <= 120
    criterion(11, ok, f"reference accepted at 1.0 with cache hit: {accepted}; broken corpus exit {code}; "
                      f"crash/timeout validity {zeros}; {wall:.1f}s")


def test_c12_gap_signs(criterion):
    cases = [
        (gap(10.5, 10.0, "min"), 5.0),
        (gap(9.0, 10.0, "max"), 10.0),
        (gap(10.0, 10.0, "min"), 0.0),
        (gap(9.653, 10.0, "min"), -3.47),
        (gap(11.0, 10.0, "max"), -10.0),
    ]
    worst = max(abs(a - b) for a, b in cases)
    criterion(12, worst <= 1e-9, f"gap examples reproduced, max deviation {worst:.1e}; "
                                 f"a solution beating the reference gives {cases[3][0]:.2f}%")
