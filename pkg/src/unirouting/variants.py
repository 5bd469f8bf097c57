"""Constraint-family taxonomy, default parameters and the variant catalog.

A routing variant is a set of constraint families.  Names such as
``AMDOCVRPBPLTW`` are parsed into families and rendered back canonically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

FAMILIES = ("C", "O", "B", "BP", "L", "TW", "MD", "PC", "OP", "A", "PD")

# families that need a depot-based capacitated base problem
_CVRP_ONLY = {"O", "B", "BP", "L", "TW", "MD"}

# 13 feature slots of the multi-hot signature
SIGNATURE_SLOTS = (
    "RI", "Coord", "Demand", "Prize", "Penalty", "EAT", "LAT", "ST",
    "Depot", "Pickup", "Delivery", "Sub-routes", "OpenRoute",
)

# (size, value) anchors for the OP length budget and the PC penalty scale
_SIZE_TABLE = ((20, 2.0), (50, 3.0), (100, 4.0))

PARAM_NAMES = (
    "capacity", "duration_limit", "depot_count", "depot_end_time", "service_time",
    "required_prize", "max_tour_length", "backhaul_fraction",
)


class SpecError(ValueError):
    """Invalid family combination or parameter set."""


def size_scaled(n):
    """Piecewise-linear size table, clamped outside [20, 100]."""
    xs = [a for a, _ in _SIZE_TABLE]
    ys = [b for _, b in _SIZE_TABLE]
    return float(np.interp(n, xs, ys))


def has_depot(families) -> bool:
    return bool(set(families) - {"A"})


def is_single_tour(families) -> bool:
    """OP, PC and the depot-based PDTSP build a single closed tour."""
    fam = set(families)
    return bool(fam & {"OP", "PC"}) or ("PD" in fam and "C" not in fam)


def default_params(families, n_customers) -> dict:
    fam = set(families)
    asym = "A" in fam
    p = {"depot_count": 3 if "MD" in fam else (1 if has_depot(fam) else 0)}
    if "C" in fam:
        p["capacity"] = 20 if "PD" in fam else 50
    if "L" in fam:
        p["duration_limit"] = 0.6 if asym else 3.0
    if "TW" in fam:
        p["depot_end_time"] = 1.0 if asym else 3.0
        p["service_time"] = 0.2
    if "PC" in fam:
        p["required_prize"] = 1.0
    if "OP" in fam:
        p["max_tour_length"] = size_scaled(n_customers)
    if fam & {"B", "BP"}:
        p["backhaul_fraction"] = 0.2
    return p


def validate_families(families, n_customers=None) -> None:
    fam = set(families)
    unknown = fam - set(FAMILIES)
    if unknown:
        raise SpecError(f"unknown families: {sorted(unknown)}")
    if {"B", "BP"} <= fam:
        raise SpecError("conflicting families B and BP: BP already implies backhauls")
    if "PD" in fam and fam & {"B", "BP"}:
        raise SpecError(f"conflicting families PD and {sorted(fam & {'B', 'BP'})}")
    if "OP" in fam and "PC" in fam:
        raise SpecError("conflicting families OP and PC")
    for single in ("OP", "PC"):
        if single in fam and fam - {single}:
            raise SpecError(f"family {single} cannot be combined with {sorted(fam - {single})}")
    missing_c = fam & _CVRP_ONLY
    if missing_c and "C" not in fam:
        raise SpecError(f"families {sorted(missing_c)} require C")
    if "PD" in fam and fam & {"TW", "L", "MD"}:
        raise SpecError(f"conflicting families PD and {sorted(fam & {'TW', 'L', 'MD'})}")
    if n_customers is not None:
        if n_customers < 1:
            raise SpecError("n_customers must be positive")
        if "PD" in fam and n_customers % 2:
            raise SpecError("PD needs an even number of customers")


@dataclass(frozen=True)
class ConstraintSpec:
    families: frozenset
    n_customers: int
    params: Mapping = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "families", frozenset(self.families))
        validate_families(self.families, self.n_customers)
        merged = default_params(self.families, self.n_customers)
        merged.update(self.params or {})
        unknown = set(merged) - set(PARAM_NAMES)
        if unknown:
            raise SpecError(f"unknown params: {sorted(unknown)}")
        dc = int(merged["depot_count"])
        if "MD" in self.families and dc < 2:
            raise SpecError("MD requires depot_count >= 2")
        if "MD" not in self.families and dc not in (0, 1):
            raise SpecError("depot_count must be 0 or 1 without MD")
        if not has_depot(self.families) and dc != 0:
            raise SpecError("depot_count must be 0 for depot-free variants")
        if has_depot(self.families) and dc == 0:
            raise SpecError("this variant needs a depot")
        object.__setattr__(self, "params", dict(sorted(merged.items())))

    @property
    def name(self) -> str:
        return variant_name(self.families)

    @property
    def depot_count(self) -> int:
        return int(self.params["depot_count"])

    @property
    def n_nodes(self) -> int:
        return self.depot_count + self.n_customers

    @property
    def asymmetric(self) -> bool:
        return "A" in self.families

    def with_size(self, n_customers: int) -> "ConstraintSpec":
        """Same families, defaults recomputed for a new size (explicit overrides kept)."""
        base = default_params(self.families, self.n_customers)
        overrides = {k: v for k, v in self.params.items() if base.get(k) != v}
        return ConstraintSpec(self.families, n_customers, overrides)

    def to_dict(self) -> dict:
        return {"families": sorted(self.families), "n": self.n_customers, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d) -> "ConstraintSpec":
        return cls(frozenset(d["families"]), int(d["n"]), dict(d.get("params") or {}))


def variant_name(families) -> str:
    fam = set(families)
    head = "A" if "A" in fam else ""
    if "OP" in fam:
        return head + "OP"
    if "PC" in fam:
        return head + "PCTSP"
    if "C" not in fam:
        return head + ("PDTSP" if "PD" in fam else "TSP")
    s = head + ("MD" if "MD" in fam else "") + ("O" if "O" in fam else "")
    s += ("PD" if "PD" in fam else "") + "CVRP"
    s += "BP" if "BP" in fam else ("B" if "B" in fam else "")
    s += ("L" if "L" in fam else "") + ("TW" if "TW" in fam else "")
    return s


_NAME_RE = re.compile(r"^(A)?(MD)?(O)?(PD)?CVRP(BP|B)?(L)?(TW)?$")
_TSP_NAMES = {
    "TSP": set(), "PDTSP": {"PD"}, "OP": {"OP"}, "PCTSP": {"PC"},
    # stochastic prizes are not modelled; treated as PCTSP-shaped input
    "SPCTSP": {"PC"},
}


def parse_variant(name: str) -> frozenset:
    """Families for a catalog-style name (case-insensitive)."""
    key = name.strip().upper()
    if key in _TSP_NAMES:
        return frozenset(_TSP_NAMES[key])
    if key.startswith("A") and key[1:] in _TSP_NAMES and key[1:] in ("TSP", "PDTSP"):
        return frozenset(_TSP_NAMES[key[1:]] | {"A"})
    m = _NAME_RE.match(key)
    if not m:
        raise SpecError(f"unknown variant {name!r}; known: {', '.join(catalog())}")
    a, md, o, pd, b, l, tw = m.groups()
    fam = {"C"}
    for flag, tag in ((a, "A"), (md, "MD"), (o, "O"), (pd, "PD"), (l, "L"), (tw, "TW")):
        if flag:
            fam.add(tag)
    if b:
        fam.add(b)
    validate_families(fam)
    return frozenset(fam)


def make_spec(name: str, n_customers: int, **params) -> ConstraintSpec:
    return ConstraintSpec(parse_variant(name), n_customers, params)


SEEN_VARIANTS = (
    "ATSP", "TSP", "OP", "PCTSP", "PDTSP", "ACVRP", "CVRP", "CVRPTW", "CVRPB", "OCVRP", "OCVRPTW",
)

_UNSEEN_DOCUMENTED = """
CVRPL OCVRPB CVRPBL CVRPLTW OCVRPBTW CVRPBLTW OCVRPL CVRPBTW OCVRPBL OCVRPLTW OCVRPBLTW CVRPBP
OCVRPBP CVRPBPL OCVRPBPTW CVRPBPTW OCVRPBPL MDCVRP MDCVRPTW MDOCVRP MDCVRPL MDCVRPB MDOCVRPTW
MDOCVRPB MDCVRPBL MDCVRPLTW MDOCVRPBTW MDCVRPBLTW MDOCVRPL MDCVRPBTW MDOCVRPBL MDOCVRPLTW
MDOCVRPBLTW MDCVRPBP MDOCVRPBP MDCVRPBPL MDOCVRPBPTW MDOCVRPBPL SPCTSP
""".split()

_UNSEEN_NEW = """
ACVRPTW AOCVRP ACVRPL ACVRPB AOCVRPTW AOCVRPB ACVRPBL ACVRPLTW AOCVRPBTW ACVRPBLTW AOCVRPL
ACVRPBTW AOCVRPBL AOCVRPLTW AOCVRPBLTW ACVRPBP AOCVRPBP ACVRPBPL AOCVRPBPTW AOCVRPBPL AMDCVRP
AMDCVRPTW AMDOCVRP AMDCVRPL AMDCVRPB AMDOCVRPTW AMDOCVRPB AMDCVRPBL AMDCVRPLTW AMDOCVRPBTW
AMDCVRPBLTW AMDOCVRPL AMDCVRPBTW AMDOCVRPBL AMDOCVRPLTW AMDOCVRPBLTW AMDCVRPBP AMDOCVRPBP
AMDCVRPBPL AMDOCVRPBPTW AMDOCVRPBPL APDTSP PDCVRP OPDCVRP APDCVRP AOPDCVRP
""".split()

UNSEEN_VARIANTS = tuple(dict.fromkeys(_UNSEEN_DOCUMENTED + _UNSEEN_NEW))


def catalog() -> tuple:
    return SEEN_VARIANTS + UNSEEN_VARIANTS
