"""Command-line interface ``kpent``.

Exit codes: 0 when every check passes, 1 when any check fails (or a
falsification run flags a candidate), 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, KpentError
from .families import Distribution
from .grid import DensityGrid, entropy_power, load_grid, renyi_entropy, save_grid
from .harness import SWEEP_KNOBS, Config, falsify, selftest, sweep, verify
from .pipeline import as_grid, resolve_spacing
from .rearrange import majorizes, rearrange
from .convolve import convolve
from .report import csv_text, json_text
from .theorems import REGISTRY

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

EPI_IDS = {
    "vector": "T3.1-vector-epi",
    "linear": "T3.2-linear-epi",
    "strong": "T3.3-gaussian-strong",
    "isotropic": "T3.4-isotropic-lc",
    "threshold": "C3.1-isotropic-threshold",
    "delta": "D3.1-delta-LX",
    "open": "Q3.1-open-strengthened",
}


# -- argument helpers ---------------------------------------------------------------------

def _json_arg(text: str):
    """Inline JSON, or ``@path`` to a JSON file."""
    try:
        if text.startswith("@"):
            return json.loads(Path(text[1:]).read_text())
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse JSON argument {text!r}: {exc}") from exc


def _value(text: str):
    t = text.strip().lower()
    if t in ("inf", "infinity"):
        return math.inf
    try:
        v = float(t)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    return int(v) if v.is_integer() and "." not in t and "e" not in t else v


def _values(text: str):
    return [_value(v) for v in text.split(",") if v.strip()]


def _law_or_grid(text: str, cells):
    """A saved grid path, or a distribution JSON (inline or @file) gridded at ``cells``."""
    p = Path(text)
    if not text.startswith(("{", "@")) and p.exists():
        return load_grid(p)
    law = Distribution.from_json(_json_arg(text))
    return as_grid(law, resolve_spacing([law], cells))


def _laws_on_common_spacing(texts, cells):
    items = []
    for t in texts:
        p = Path(t)
        items.append(load_grid(p) if not t.startswith(("{", "@")) and p.exists()
                     else Distribution.from_json(_json_arg(t)))
    h = resolve_spacing(items, cells)
    return [as_grid(x, h) for x in items]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    s = argparse.SUPPRESS
    g.add_argument("--seed", type=int, default=s, help="master seed (u64)")
    g.add_argument("--samples", type=int, default=s, help="Monte Carlo samples per estimate")
    g.add_argument("--grid", type=int, default=s,
                   help="grid resolution: cells across +/- 8 sigma_min of the narrowest input")
    g.add_argument("--tol", type=float, default=s, help="extra absolute slack added to every tolerance")
    g.add_argument("--out", default=s, help="output path (reports, or the grid for convolve/rearrange)")
    g.add_argument("--format", choices=("csv", "json"), default=s)
    g.add_argument("--config", default=s, help="TOML configuration file")
    g.add_argument("--workers", type=int, default=s, help="parallel worker processes")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="kpent", parents=[common],
                                     description="Entropic Kneser-Poulsen verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("entropy", parents=[common], help="Rényi entropies of a grid or law")
    p.add_argument("law", help="grid file, distribution JSON, or @file.json")
    p.add_argument("--alpha", default="0,0.5,1,2,inf", help="comma-separated orders")

    p = sub.add_parser("convolve", parents=[common], help="density of an independent sum")
    p.add_argument("a")
    p.add_argument("b")

    p = sub.add_parser("rearrange", parents=[common], help="symmetric decreasing rearrangement")
    p.add_argument("law")

    p = sub.add_parser("majorize", parents=[common], help="is f majorized by g?")
    p.add_argument("f")
    p.add_argument("g")
    p.add_argument("--tolerance", type=float, default=0.0)

    p = sub.add_parser("kp-check", parents=[common], help="Kneser-Poulsen union/intersection check")
    p.add_argument("--mode", choices=("union", "intersection"), default="union")
    p.add_argument("--centers", help="PointConfiguration JSON {dim, radius, centers} or @file")
    p.add_argument("--T", dest="T", help="contraction kind or contraction JSON (@file allowed)")
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)

    p = sub.add_parser("epi-check", parents=[common], help="entropy power checks")
    p.add_argument("kind", choices=sorted(EPI_IDS))
    p.add_argument("--params", help="parameter overrides as JSON")

    p = sub.add_parser("diversity", parents=[common], help="D_t^alpha of a discrete law or a grid")
    p.add_argument("--points", help="JSON list of points (discrete law)")
    p.add_argument("--weights", help="JSON probability vector (default uniform)")
    p.add_argument("--law", help="grid file or distribution JSON (grid route)")
    p.add_argument("--t", default="1", help="comma-separated t values")
    p.add_argument("--alpha", default="2", help="comma-separated orders (grid route: d <= 2 unless 2)")

    p = sub.add_parser("verify", parents=[common], help="run one registry entry")
    p.add_argument("theorem_id")
    p.add_argument("--instances", type=int)
    p.add_argument("--params", help="parameter overrides as JSON")

    p = sub.add_parser("sweep", parents=[common], help="sweep one knob of a registry entry")
    p.add_argument("theorem_id")
    p.add_argument("--param", required=True, choices=SWEEP_KNOBS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--params", help="parameter overrides as JSON")

    p = sub.add_parser("falsify", parents=[common], help="randomized search for violations")
    p.add_argument("theorem_id")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--params", help="parameter overrides as JSON")
    p.add_argument("--bundles", help="directory for candidate reproduction bundles")

    sub.add_parser("selftest", parents=[common], help="registry coverage and quick checks")
    sub.add_parser("list", parents=[common], help="list registry entries")
    return parser


def _config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    return cfg.updated(seed=getattr(args, "seed", None), samples=getattr(args, "samples", None),
                       grid=getattr(args, "grid", None), tol=getattr(args, "tol", None),
                       out=getattr(args, "out", None), format=getattr(args, "format", None),
                       workers=getattr(args, "workers", None))


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_reports(rows, cfg: Config) -> int:
    text = json_text(rows) if cfg.format == "json" else csv_text(rows)
    _emit(text, cfg.out)
    return EXIT_PASS if all(r.passed for r in rows) else EXIT_FAIL


def _emit_table(records, cfg: Config):
    if cfg.format == "json":
        _emit(json.dumps(records, indent=2, default=str) + "\n", None)
    else:
        keys = list(records[0])
        lines = [",".join(keys)] + [",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                                             for k in keys) for r in records]
        _emit("\n".join(lines) + "\n", None)


def _grid_summary(f: DensityGrid) -> dict:
    return {"dim": f.dim, "spacing": f.spacing, "shape": list(f.spec.shape),
            "origin": list(f.spec.origin), "h1": renyi_entropy(f, 1)}


# -- commands -------------------------------------------------------------------------------------

def _cmd_entropy(args, cfg):
    f = _law_or_grid(args.law, cfg.grid)
    recs = [{"alpha": a, "entropy": renyi_entropy(f, a)} for a in _values(args.alpha)]
    recs.append({"alpha": "N", "entropy": entropy_power(f)})
    _emit_table(recs, cfg)
    return EXIT_PASS


def _cmd_convolve(args, cfg):
    f, g = _laws_on_common_spacing([args.a, args.b], cfg.grid)
    out = convolve(f, g)
    if cfg.out:
        save_grid(out, cfg.out)
    _emit(json.dumps(_grid_summary(out)) + "\n", None)
    return EXIT_PASS


def _cmd_rearrange(args, cfg):
    out = rearrange(_law_or_grid(args.law, cfg.grid))
    if cfg.out:
        save_grid(out, cfg.out)
    _emit(json.dumps(_grid_summary(out)) + "\n", None)
    return EXIT_PASS


def _cmd_majorize(args, cfg):
    f, g = _laws_on_common_spacing([args.f, args.g], cfg.grid)
    v = majorizes(g, f, args.tolerance)
    _emit(json.dumps({"holds": v.holds, "worst_radius": v.worst_radius,
                      "worst_deficit": v.worst_deficit, "tolerance": v.tolerance_used}) + "\n", None)
    return EXIT_PASS if v.holds else EXIT_FAIL


def _params(args) -> dict:
    raw = getattr(args, "params", None)
    if not raw:
        return {}
    p = _json_arg(raw)
    if not isinstance(p, dict):
        raise ConfigError("--params must be a JSON object")
    return p


def _cmd_kp(args, cfg):
    tid = "CONJ1.1-kp-union" if args.mode == "union" else "CONJ1.3-kp-intersection"
    params = {}
    if args.centers:
        params["X"] = _json_arg(args.centers)
        params["radius"] = params["X"].get("radius", 1.0)
        params["d"] = params["X"].get("dim")
    if args.T:
        params["T"] = _json_arg(args.T) if args.T.startswith(("{", "@")) else args.T
    if args.k is not None:
        params["k"] = args.k
    if args.d is not None:
        params["d"] = args.d
    return _emit_reports(verify(tid, cfg, params), cfg)


def _cmd_epi(args, cfg):
    return _emit_reports(verify(EPI_IDS[args.kind], cfg, _params(args)), cfg)


def _cmd_diversity(args, cfg):
    from .diversity import diversity2_discrete, diversity2_grid, diversity_discrete, diversity_grid

    ts, alphas = _values(args.t), _values(args.alpha)
    if args.points:
        pts = np.asarray(_json_arg(args.points), dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.full(len(pts), 1 / len(pts)) if not args.weights else np.asarray(_json_arg(args.weights), float)
        route = "exact"

        def value(t, a):
            return diversity2_discrete(w, pts, t) if a == 2 else diversity_discrete(w, pts, t, a)
    elif args.law:
        f = _law_or_grid(args.law, cfg.grid)
        route = "grid"

        def value(t, a):
            return diversity2_grid(f, t) if a == 2 else diversity_grid(f, t, a)
    else:
        raise ConfigError("diversity needs --points or --law")
    recs = [{"t": t, "alpha": a, "D": value(t, a), "route": route} for t in ts for a in alphas]
    _emit_table(recs, cfg)
    return EXIT_PASS


def _cmd_verify(args, cfg):
    return _emit_reports(verify(args.theorem_id, cfg, _params(args), args.instances), cfg)


def _cmd_sweep(args, cfg):
    return _emit_reports(sweep(args.theorem_id, args.param, _values(args.values), cfg, _params(args)), cfg)


def _cmd_falsify(args, cfg):
    summary = falsify(args.theorem_id, args.trials, cfg, _params(args), args.bundles)
    if cfg.out:
        Path(cfg.out).write_text(json_text(summary.rows) if cfg.format == "json" else csv_text(summary.rows))
    info = summary.to_json()
    sys.stdout.write(json.dumps(info, indent=2, default=str) + "\n")
    return EXIT_FAIL if summary.flags else EXIT_PASS


def _cmd_selftest(args, cfg):
    res = selftest(cfg)
    sys.stdout.write("\n".join(res.lines()) + "\n")
    return EXIT_PASS if res.ok else EXIT_FAIL


def _cmd_list(args, cfg):
    for tid, th in REGISTRY.items():
        sys.stdout.write(f"{tid:30s} {th.status:11s} {th.statement}\n")
    return EXIT_PASS


COMMANDS = {
    "entropy": _cmd_entropy, "convolve": _cmd_convolve, "rearrange": _cmd_rearrange,
    "majorize": _cmd_majorize, "kp-check": _cmd_kp, "epi-check": _cmd_epi,
    "diversity": _cmd_diversity, "verify": _cmd_verify, "sweep": _cmd_sweep,
    "falsify": _cmd_falsify, "selftest": _cmd_selftest, "list": _cmd_list,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except KpentError as exc:
        sys.stderr.write(f"kpent: error: {exc}\n")
        return EXIT_CONFIG if isinstance(exc, (ConfigError, ValueError)) else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
