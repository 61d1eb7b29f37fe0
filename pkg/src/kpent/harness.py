"""Suite orchestration: configuration, verify / sweep / falsify / selftest.

Every randomized instance owns a sub-seed ``derive_seed(master, theorem_id,
index)``; rows may be computed in parallel processes but are always emitted
in index order, so reports are reproducible byte for byte (runtime aside).
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .ballgeom import MCParams
from .errors import ConfigError, EstimationError
from .report import CheckReport
from .rng import derive_seed
from .theorems import MANIFEST, REGISTRY, RunContext, get

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SWEEP_KNOBS = ("alpha", "lambda", "lip", "t", "k", "d", "samples")


@dataclass(frozen=True)
class Config:
    """Harness settings; ``theorems`` maps ids to parameter overrides."""

    seed: int = 0
    samples: int = 1_000_000
    max_samples: int = 100_000_000
    escalate: bool = True
    grid: Optional[int] = None
    tol: float = 0.0
    workers: int = 1
    instances: int = 1
    format: str = "csv"
    out: Optional[str] = None
    theorems: Dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        checks = (
            (isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be an integer in [0, 2^64)"),
            (isinstance(self.samples, int) and self.samples >= 1, "samples must be a positive integer"),
            (isinstance(self.max_samples, int) and self.max_samples >= 1, "max_samples must be a positive integer"),
            (self.grid is None or (isinstance(self.grid, int) and self.grid >= 2), "grid must be an integer >= 2"),
            (isinstance(self.tol, (int, float)) and self.tol >= 0 and math.isfinite(self.tol),
             "tol must be a non-negative number"),
            (isinstance(self.workers, int) and self.workers >= 1, "workers must be a positive integer"),
            (isinstance(self.instances, int) and self.instances >= 1, "instances must be a positive integer"),
            (self.format in ("csv", "json"), "format must be 'csv' or 'json'"),
            (isinstance(self.theorems, dict) and all(isinstance(v, dict) for v in self.theorems.values()),
             "[theorems.<id>] tables must hold parameter overrides"),
        )
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for tid in self.theorems:
            get(tid)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "Config":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_dict(data)

    def updated(self, **changes) -> "Config":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)

    def overrides(self, theorem_id: str) -> dict:
        return dict(self.theorems.get(theorem_id, {}))

    def mc(self, seed: int, workers: int = 1) -> MCParams:
        return MCParams(self.samples, seed, workers, max(self.max_samples, self.samples), self.escalate)


# -- execution ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Task:
    theorem_id: str
    params: dict
    seed: int
    cells: Optional[int]
    mc: MCParams
    tags: dict


def _execute(task: _Task) -> List[CheckReport]:
    ctx = RunContext(task.seed, task.cells, task.mc)
    rows = get(task.theorem_id).run(task.params, ctx)
    for r in rows:
        r.params = dict(r.params, **task.tags)
    return rows


def _run_tasks(tasks: Sequence[_Task], workers: int) -> List[List[CheckReport]]:
    if workers <= 1 or len(tasks) <= 1:
        return [_execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute, tasks))


def _apply_slack(rows: List[CheckReport], slack: float) -> List[CheckReport]:
    """Add the user's extra absolute slack (``--tol``) to every tolerance."""
    if slack:
        for r in rows:
            r.tolerance += slack
            r.passed = r.passed or bool(r.margin >= -r.tolerance)
            r.details["extra_slack"] = slack
    return rows


def _tasks(theorem_id, config: Config, params: dict, indices, tags=None, samples=None) -> List[_Task]:
    inner_workers = config.workers if config.workers > 1 and len(indices) == 1 else 1
    cfg = config if samples is None else config.updated(samples=samples)
    out = []
    for i in indices:
        seed = derive_seed(config.seed, theorem_id, i)
        mc = cfg.mc(seed, inner_workers)
        if samples is not None:
            mc = MCParams(samples, seed, inner_workers, samples, False)
        out.append(_Task(theorem_id, params, seed, config.grid, mc, dict(tags or {}, instance=i)))
    return out


def verify(theorem_id: str, config: Config = Config(), params: dict = None,
           instances: int = None) -> List[CheckReport]:
    """Run ``instances`` randomized instances of one registry entry."""
    theorem = get(theorem_id)
    merged = theorem.params(config.overrides(theorem_id))
    merged.update(params or {})
    n_default = merged.pop("instances", config.instances)
    n = int(instances if instances is not None else n_default)
    if n < 1:
        raise ConfigError("instances must be >= 1")
    tasks = _tasks(theorem_id, config, merged, range(n))
    rows = [r for part in _run_tasks(tasks, config.workers) for r in part]
    return _apply_slack(rows, config.tol)


def _knob_params(theorem, knob, value) -> dict:
    if knob == "alpha":
        return {"alphas": [value], "alpha": value}
    if knob == "t":
        return {"t": float(value)}
    if knob in ("k", "d"):
        return {knob: int(value)}
    if knob in ("lambda", "lip"):
        return {knob: float(value)}
    return {}


def sweep(theorem_id: str, parameter: str, values: Sequence, config: Config = Config(),
          params: dict = None) -> List[CheckReport]:
    """One report block per value of a registered knob, on the same instances."""
    theorem = get(theorem_id)
    if parameter not in SWEEP_KNOBS:
        raise ConfigError(f"unknown sweep parameter {parameter!r} (choose from {SWEEP_KNOBS})")
    if parameter not in theorem.knobs:
        raise ConfigError(f"{theorem_id} has no knob {parameter!r} (knobs: {theorem.knobs})")
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = theorem.params(config.overrides(theorem_id))
    base.update(params or {})
    n = int(base.pop("instances", config.instances))
    tasks = []
    for v in values:
        merged = dict(base, **_knob_params(theorem, parameter, v))
        samples = int(v) if parameter == "samples" else None
        tasks.extend(_tasks(theorem_id, config, merged, range(n), {"sweep": {parameter: v}}, samples))
    rows = [r for part in _run_tasks(tasks, config.workers) for r in part]
    return _apply_slack(rows, config.tol)


@dataclass
class FalsifySummary:
    theorem_id: str
    trials: int
    rows: List[CheckReport] = field(default_factory=list)
    candidates: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def flags(self) -> int:
        return len(self.candidates)

    def to_json(self) -> dict:
        return {"theorem_id": self.theorem_id, "trials": self.trials, "rows": len(self.rows),
                "failures": self.failures, "flags": self.flags, "skipped": self.skipped,
                "candidates": self.candidates}


def falsify(theorem_id: str, trials: int, config: Config = Config(), params: dict = None,
            bundle_dir=None) -> FalsifySummary:
    """Randomized search for violations; margins below -5 x tolerance become candidates.

    Each candidate carries a reproduction bundle (seed, config, parameters,
    serialized inputs, report).  Instances that cannot be constructed (for
    example a random map failing its Lipschitz probe) are counted as skipped.
    """
    theorem = get(theorem_id)
    if int(trials) < 1:
        raise ConfigError("trials must be >= 1")
    merged = theorem.params(config.overrides(theorem_id))
    merged.update(params or {})
    merged.pop("instances", None)
    summary = FalsifySummary(theorem_id, int(trials))
    tasks = _tasks(theorem_id, config, merged, range(int(trials)))
    results = _run_tasks_tolerant(tasks, config.workers)
    for task, res in zip(tasks, results):
        if isinstance(res, str):
            summary.skipped.append({"trial": task.tags["instance"], "seed": task.seed, "reason": res})
            continue
        res = _apply_slack(res, config.tol)
        summary.rows.extend(res)
        for r in res:
            if r.flagged:
                summary.candidates.append({
                    "theorem_id": theorem_id, "trial": task.tags["instance"], "seed": task.seed,
                    "master_seed": config.seed, "config": config.to_dict(), "params": merged,
                    "inputs": r.details.get("inputs"), "report": r.to_json(),
                })
    if bundle_dir is not None and summary.candidates:
        path = Path(bundle_dir)
        path.mkdir(parents=True, exist_ok=True)
        for c in summary.candidates:
            (path / f"{theorem_id}-trial{c['trial']}.json").write_text(
                json.dumps(c, indent=2, default=_jsonable) + "\n")
    return summary


def _execute_tolerant(task: _Task):
    try:
        return _execute(task)
    except EstimationError as exc:
        return f"{type(exc).__name__}: {exc}"


def _run_tasks_tolerant(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_execute_tolerant(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_tolerant, tasks))


def _jsonable(obj):
    try:
        import numpy as np
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(obj, float):
        return repr(obj)
    return str(obj)


# -- self-test ---------------------------------------------------------------------------------

QUICK_IDS = ("C2.3-intrinsic-volumes", "L2.1-majorization-convex", "L2.2-ball-cumulative",
             "T3.2-linear-epi")


@dataclass
class SelftestResult:
    missing: List[str]
    unexpected: List[str]
    failures: List[str]

    @property
    def ok(self) -> bool:
        return not (self.missing or self.unexpected or self.failures)

    def lines(self) -> List[str]:
        out = [f"registry: {len(REGISTRY)} entries, manifest: {len(MANIFEST)} ids"]
        out += [f"MISSING {i}" for i in self.missing]
        out += [f"UNEXPECTED {i}" for i in self.unexpected]
        out += [f"FAILED {i}" for i in self.failures]
        out.append("selftest " + ("ok" if self.ok else "FAILED"))
        return out


def selftest(config: Config = Config(), quick: bool = True) -> SelftestResult:
    """Registry coverage against the manifest, plus a few fast closed-form runs."""
    missing = [i for i in MANIFEST if i not in REGISTRY]
    unexpected = [i for i in REGISTRY if i not in MANIFEST]
    failures = []
    if quick:
        for tid in QUICK_IDS:
            rows = verify(tid, config, instances=1)
            if not all(r.passed for r in rows):
                failures.append(tid)
    return SelftestResult(missing, unexpected, failures)
