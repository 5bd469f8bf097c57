"""Inference: best-of multi-start (and optional augmentation) per instance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .feasibility import check_solution, evaluate_solution
from .instance import augment
from .oracle import exact_solve, gap
from .policy.model import UnifiedPolicy
from .policy.rollout import default_starts, run_policy


@dataclass
class Solved:
    sequence: list
    objective: float
    sense: str
    feasible: bool


def default_augmentation(instance) -> int:
    return 8 if instance.symmetric else 128


def solve_batch(model: UnifiedPolicy, instances, aug=1, mode="greedy", generator=None,
                chunk=64) -> list:
    """Best feasible solution per instance over all starts and ``aug`` transformed copies.

    Augmented copies keep node indices, so their sequences are scored on the original.
    """
    out = []
    with torch.no_grad():
        for lo in range(0, len(instances), chunk):
            block = instances[lo:lo + chunk]
            expanded, owner = [], []
            for b, inst in enumerate(block):
                views = augment(inst, aug) if aug > 1 else [inst]
                expanded += views
                owner += [b] * len(views)
            rb = run_policy(model, expanded, default_starts(expanded), mode, generator)
            best = [None] * len(block)
            for r, seq in enumerate(rb.sequences):
                if rb.dead[r]:
                    continue
                b = owner[rb.inst[r]]
                res = evaluate_solution(block[b], seq)
                key = -res.value if res.sense == "maximize" else res.value
                if best[b] is None or key < best[b][0] - 1e-12:
                    best[b] = (key, Solved(list(seq), res.value, res.sense, True))
            for b, inst in enumerate(block):
                if best[b] is None:
                    out.append(Solved([], float("nan"), "minimize", False))
                    continue
                s = best[b][1]
                s.feasible = check_solution(inst, s.sequence).feasible
                out.append(s)
    return out


def gaps_to_exact(model, instances, aug=1, mode="greedy", references=None) -> np.ndarray:
    """Percent gap of the policy against the exact optimum, one entry per instance."""
    solved = solve_batch(model, instances, aug, mode)
    refs = references if references is not None else [exact_solve(i).objective.value for i in instances]
    return np.array([gap(s.objective, ref, s.sense) if s.feasible else np.inf
                     for s, ref in zip(solved, refs)])
