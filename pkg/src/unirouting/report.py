"""Evaluation reports: per-variant aggregates written as CSV and echoed as a table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .codec import atomic_write

REPORT_HEADER = ("variant", "objective", "gap_to_exact_pct", "wall_ms", "feasibility_rate",
                 "instances", "augmentation")


@dataclass
class EvalRow:
    variant: str
    objective: float
    gap: float | None
    wall_ms: int
    feasibility_rate: float
    instances: int
    augmentation: int

    def cells(self) -> list:
        gap = "" if self.gap is None or not math.isfinite(self.gap) else f"{self.gap:.4f}"
        return [self.variant, f"{self.objective:.6f}", gap, str(self.wall_ms),
                f"{self.feasibility_rate:.4f}", str(self.instances), str(self.augmentation)]


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in self.rows:
            w.writerow(row.cells())
        return buf.getvalue()

    def write(self, path) -> None:
        atomic_write(path, self.to_csv())

    def table(self) -> str:
        """Console rendering of exactly the CSV cells."""
        lines = list(csv.reader(io.StringIO(self.to_csv())))
        widths = [max(len(r[c]) for r in lines) for c in range(len(REPORT_HEADER))]
        out = []
        for k, r in enumerate(lines):
            out.append("  ".join(cell.rjust(wd) for cell, wd in zip(r, widths)))
            if k == 0:
                out.append("  ".join("-" * wd for wd in widths))
        return "\n".join(out)


def aggregate(variant, objectives, gaps, wall_ms, feasible, augmentation) -> EvalRow:
    n = len(objectives)
    ok = [o for o, f in zip(objectives, feasible) if f]
    obj = sum(ok) / len(ok) if ok else float("nan")
    gap = None
    if gaps is not None and all(g is not None for g in gaps):
        finite = [g for g in gaps if math.isfinite(g)]
        gap = sum(finite) / len(finite) if finite else float("nan")
    return EvalRow(variant, obj, gap, int(wall_ms), (len(ok) / n) if n else 0.0, n, augmentation)
