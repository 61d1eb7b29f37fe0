"""Check reports, tolerance assembly and CSV/JSON emission.

Every inequality check in the package produces a :class:`CheckReport`.  The
tolerance is always assembled the same way::

    tolerance = grid budget + 3 * (sum of MC standard errors) + float budget

where the float budget is nonzero only for closed-form comparisons whose two
sides agree up to rounding (equality cases).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

CSV_COLUMNS = (
    "theorem_id", "k", "d", "lhs", "rhs", "margin", "tolerance", "stderr",
    "samples", "seed", "provenance", "pass", "params", "runtime_ms",
)

MC_SIGMAS = 3.0
FLOAT_BUDGET = 1e-9


def assemble_tolerance(grid_budget: float = 0.0, mc_stderrs: Sequence[float] = (),
                       float_budget: float = 0.0) -> float:
    return grid_budget + MC_SIGMAS * math.fsum(mc_stderrs) + float_budget


@dataclass
class CheckReport:
    """Outcome of one inequality check.

    ``sense="le"`` encodes the claim ``lhs <= rhs`` (margin ``rhs - lhs``);
    ``sense="ge"`` encodes ``lhs >= rhs`` (margin ``lhs - rhs``).
    """

    theorem_id: str
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    passed: bool
    provenance: tuple = ("closed-form", "closed-form")
    seed: int = 0
    runtime_ms: int = 0
    k: Optional[int] = None
    d: Optional[int] = None
    stderr: float = 0.0
    samples: int = 0
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, theorem_id, lhs, rhs, sense="le", grid_budget=0.0, mc_stderrs=(),
              float_budget=0.0, **kw) -> "CheckReport":
        lhs, rhs = float(lhs), float(rhs)
        margin = rhs - lhs if sense == "le" else lhs - rhs
        tol = assemble_tolerance(grid_budget, mc_stderrs, float_budget)
        stderr = kw.pop("stderr", math.fsum(mc_stderrs))
        details = kw.pop("details", {})
        details = dict(details, sense=sense, grid_budget=grid_budget,
                       float_budget=float_budget)
        return cls(theorem_id, lhs, rhs, margin, tol, bool(margin >= -tol),
                   stderr=stderr, details=details, **kw)

    @property
    def flagged(self) -> bool:
        """A violation beyond five times the tolerance (falsification candidate)."""
        return self.margin < -5 * max(self.tolerance, 0.0) and self.margin < 0

    def row(self) -> dict:
        prov = "|".join(self.provenance) if isinstance(self.provenance, (tuple, list)) else str(self.provenance)
        return {
            "theorem_id": self.theorem_id,
            "k": "" if self.k is None else self.k,
            "d": "" if self.d is None else self.d,
            "lhs": repr(self.lhs),
            "rhs": repr(self.rhs),
            "margin": repr(self.margin),
            "tolerance": repr(self.tolerance),
            "stderr": repr(float(self.stderr)),
            "samples": int(self.samples),
            "seed": int(self.seed),
            "provenance": prov,
            "pass": "true" if self.passed else "false",
            "params": json.dumps(self.params, sort_keys=True, separators=(",", ":"), default=_json_default),
            "runtime_ms": int(self.runtime_ms),
        }

    def to_json(self) -> dict:
        out = self.row()
        out.update(lhs=self.lhs, rhs=self.rhs, margin=self.margin, tolerance=self.tolerance,
                   stderr=float(self.stderr), passed=self.passed, params=self.params,
                   details=self.details)
        out.pop("pass")
        return out

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.theorem_id}: lhs={self.lhs:.10g} rhs={self.rhs:.10g} "
                f"margin={self.margin:.4g} tol={self.tolerance:.4g}")


def _json_default(obj):
    try:
        import numpy as np
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


class Timer:
    """Context manager recording elapsed wall time in milliseconds."""

    def __enter__(self):
        self._t0 = time.perf_counter()
        self.ms = 0
        return self

    def __exit__(self, *exc):
        self.ms = int(round(1000 * (time.perf_counter() - self._t0)))
        return False


def csv_text(reports: Iterable[CheckReport], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def write_csv(reports: Sequence[CheckReport], path, append: bool = False) -> Path:
    path = Path(path)
    exists = path.exists() and path.stat().st_size > 0
    with path.open("a" if append else "w", newline="") as fh:
        fh.write(csv_text(reports, header=not (append and exists)))
    return path


def json_text(reports: Iterable[CheckReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, default=_json_default) + "\n"


def strip_runtime(csv_str: str) -> list:
    """CSV rows with the runtime column removed, for determinism comparisons."""
    rows = list(csv.DictReader(io.StringIO(csv_str)))
    for r in rows:
        r.pop("runtime_ms", None)
    return rows
