"""End-to-end validation of a candidate mask over random rollouts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..feasibility import check_solution
from ..feasibility import kernels as K
from ..feasibility.batch import BatchEnv, EnvStatic
from .provider import CandidateProgram
from .sandbox import SandboxFailure, SandboxRunner

PROTOCOL_VERSION = 1


def instance_view(inst) -> dict:
    """Plain-data description of an instance handed to candidates once per rollout."""
    om = inst.omega
    return {
        "version": PROTOCOL_VERSION,
        "n": inst.n_nodes,
        "depots": list(inst.depot_indices),
        "families": sorted(inst.spec.families),
        "dist": inst.dist.tolist(),
        "demand": om[:, 0].tolist(),
        "prize": om[:, 1].tolist(),
        "penalty": om[:, 2].tolist(),
        "earliest": om[:, 3].tolist(),
        "latest": om[:, 4].tolist(),
        "service": om[:, 5].tolist(),
        "partner": inst.pair.tolist(),
        "params": dict(inst.spec.params),
    }


def state_message(env: BatchEnv, step: int) -> dict:
    fs, st = env.fs[0], env.st[0]
    return {
        "step": step,
        "n": env.static.n_nodes,
        "state": {
            "current": int(st[K.CUR]),
            "visited": [int(i) for i in np.nonzero(env.vis[0])[0]],
            "load": float(fs[K.LOAD]),
            "backhaul_load": float(fs[K.BLOAD]),
            "clock": float(fs[K.CLOCK]),
            "route_length": float(fs[K.RLEN]),
            "origin_depot": int(st[K.ORIGIN]),
            "phase": "backhaul" if st[K.PHASE] else "linehaul",
            "collected_prize": float(fs[K.PRIZE]),
        },
    }


@dataclass
class ValidationResult:
    candidate_id: str
    validity_rate: float
    rollouts: int
    outcomes: Counter = field(default_factory=Counter)
    examples: list = field(default_factory=list)

    def summary(self, limit=3) -> str:
        parts = [f"candidate {self.candidate_id}: validity {self.validity_rate:.3f} over {self.rollouts} rollouts"]
        parts += [f"  {k}: {v}" for k, v in sorted(self.outcomes.items()) if k != "ok"]
        parts += [f"  e.g. {e}" for e in self.examples[:limit]]
        return "\n".join(parts)


def _one_rollout(runner, static, inst, rng, visit_once):
    """Returns (outcome, detail)."""
    n = static.n_nodes
    dc = static.dc
    zero = np.zeros(1, np.int64)
    if dc:
        depot = int(rng.integers(dc))
        env = BatchEnv.at_depot(static, zero, np.array([depot]))
        seq = [depot]
    else:
        first = int(rng.integers(n))
        env = BatchEnv.start(static, zero, [0], [first])
        seq = [first]
    customers = np.zeros(n, bool)
    customers[dc:] = True
    for step in range(4 * n + 8):
        if env.done[0]:
            break
        reply = runner.request(state_message(env, step))
        m = reply.get("mask")
        if not isinstance(m, list) or len(m) != n:
            return "malformed", f"mask of length {len(m) if isinstance(m, list) else '?'} for n={n}"
        allowed = np.array(m, dtype=bool)
        if visit_once:
            allowed &= ~(env.vis[0] & customers)
        choices = np.nonzero(allowed)[0]
        if choices.size == 0:
            return "empty-mask", f"no selectable node at step {step}"
        a = int(choices[rng.integers(choices.size)])
        env.step(np.array([a]))
        seq.append(a)
    else:
        return "step-limit", "construction did not finish"
    report = check_solution(inst, seq)
    if not report.feasible:
        v = report.violations[0]
        return f"infeasible:{v.rule}", f"{v.rule} at step {v.step}: {v.detail}"
    return "ok", ""


def validate_candidate(candidate: CandidateProgram, task, seed=None) -> ValidationResult:
    """Fraction of completed rollouts that pass the checker (crashes and timeouts count as failures)."""
    rng = np.random.default_rng([task.seed if seed is None else seed, 0x5A17])
    outcomes = Counter()
    examples = []
    total = 0
    runner = SandboxRunner(candidate.source, task.timeout_ms)
    try:
        for inst in task.validation_instances:
            static = EnvStatic([inst])
            init = {"init": instance_view(inst)}
            for _ in range(task.rollouts_per_instance):
                total += 1
                try:
                    if runner.proc is None:
                        runner.start()
                    runner.request(init)
                    kind, detail = _one_rollout(runner, static, inst, rng, task.visit_once)
                except SandboxFailure as exc:
                    kind, detail = exc.kind, exc.detail
                    if kind != "error":
                        runner.close_process()
                outcomes[kind] += 1
                if kind != "ok" and len(examples) < 5:
                    examples.append(f"{kind}: {detail}")
    finally:
        runner.close()
    return ValidationResult(candidate.id, outcomes["ok"] / total if total else 0.0, total, outcomes, examples)
