from .batch import BatchEnv, EnvStatic, InfeasibleStart, family_flags
from .checker import CheckReport, Violation, check_solution
from .engine import (
    MaskViolation,
    ObjectiveResult,
    StepState,
    apply_action,
    depot_state,
    evaluate_solution,
    feasible_mask,
    initial_state,
    replay,
)
from .rollout import DeadEnd, Trace, random_rollouts

__all__ = [
    "BatchEnv", "EnvStatic", "InfeasibleStart", "family_flags", "CheckReport", "Violation",
    "check_solution", "MaskViolation", "ObjectiveResult", "StepState", "apply_action",
    "depot_state", "evaluate_solution", "feasible_mask", "initial_state", "replay", "DeadEnd",
    "Trace", "random_rollouts",
]
