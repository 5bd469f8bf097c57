"""Unified constructive routing: instances, feasibility masks, policy, training, oracles."""

from .instance import UnifiedInstance, augment, derive_signature, generate_instance
from .oracle import exact_solve, gap, greedy_solve
from .variants import SEEN_VARIANTS, UNSEEN_VARIANTS, ConstraintSpec, catalog, make_spec, parse_variant

__version__ = "0.1.0"

__all__ = [
    "UnifiedInstance", "augment", "derive_signature", "generate_instance", "exact_solve", "gap",
    "greedy_solve", "SEEN_VARIANTS", "UNSEEN_VARIANTS", "ConstraintSpec", "catalog", "make_spec",
    "parse_variant",
]
