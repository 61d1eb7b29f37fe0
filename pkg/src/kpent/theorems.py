"""Theorem registry: every result as a named, seedable, tolerance-aware check.

Each entry owns a runner ``run(params, ctx) -> list[CheckReport]`` that builds
one randomized instance of the result's hypothesis class (or the inputs named
in ``params``), runs the relevant pipeline and returns report rows.  Instance
construction uses ``numpy.random.default_rng(ctx.seed)``; Monte Carlo
estimators draw from the counter-based streams keyed by the same seed.

Parameters shared by most entries:

* ``d`` -- dimension;
* ``X``, ``W`` -- ``"random"`` (draw from the hypothesis class) or a
  distribution JSON object (validated against the hypotheses);
* ``T`` -- a contraction kind (``"affine"``, ``"diagonal"``, ``"coordinatewise"``,
  ``"gradient_convex"``, ``"sampled"``, ``"scaling"``, ``"mixed"``) or a
  contraction JSON object;
* ``lip`` -- optional Lipschitz scale applied to the drawn contraction;
* ``alphas`` -- Rényi orders of the entropy rows.

Hypothesis checks are hard failures (:class:`HypothesisError`): a check on
inputs outside the hypothesis class would be meaningless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import budget
from .ballgeom import (MCParams, PointConfiguration, kp_intersection_check, kp_union_check,
                       mixture_renyi_check)
from .contract import (ContractionSpec, apply_map, lip_for_checks, largest_singular_value,
                       strong_contraction_violation)
from .diversity import (DiscreteLaw, check_h2_contraction, check_renyi_gap, scaling_limit_check)
from .ensembles import describe, random_contraction, random_rotation
from .errors import ConfigError, DomainError, HypothesisError
from .families import (Distribution, is_log_concave_1d, random_isotropic_log_concave,
                       random_log_concave, random_radial, random_unconditional)
from .gauss_epi import (GaussianLaw, check_delta_lx, check_gaussian_strong, check_isotropic_lc,
                        check_isotropic_threshold, check_linear_epi, check_vector_epi,
                        isotropic_constant, isotropic_threshold, open_question_check)
from .grid import DensityGrid, GridSpec
from .pipeline import as_grid, entropy_gap, majorization, relative_spacing, resolve_spacing, sum_pair
from .polygon import ConvexPolygon, intrinsic_volumes_2d, parallel_body_area
from .rearrange import ball_cumulative, convex_functional, lattice_prefix, majorizes
from .report import FLOAT_BUDGET, CheckReport, Timer
from .rng import chunk_generator, map_chunks, stream_id

STRONG_TOL = 1e-12
CONTRACTION_KINDS = ("affine", "diagonal", "coordinatewise", "gradient_convex", "sampled")


@dataclass(frozen=True)
class RunContext:
    """Per-instance settings handed to a runner."""

    seed: int = 0
    cells: Optional[int] = None
    mc: MCParams = MCParams()

    @property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class Theorem:
    id: str
    status: str          # theorem | corollary | lemma | conjecture | question | definition
    statement: str
    runner: Callable
    defaults: Dict = field(default_factory=dict)
    knobs: tuple = ()

    @property
    def falsifiable(self) -> bool:
        """Open statements, for which violations are findings rather than bugs."""
        return self.status in ("conjecture", "question")

    def params(self, overrides: dict = None) -> dict:
        out = dict(self.defaults)
        out.update(overrides or {})
        return out

    def run(self, params: dict, ctx: RunContext) -> List[CheckReport]:
        rows = self.runner(self.params(params), ctx)
        for r in rows:
            r.seed = ctx.seed
        return rows


REGISTRY: Dict[str, Theorem] = {}


def register(id, status, statement, defaults=None, knobs=()):
    def deco(fn):
        if id in REGISTRY:
            raise ValueError(f"duplicate registry id {id}")
        REGISTRY[id] = Theorem(id, status, statement, fn, dict(defaults or {}), tuple(knobs))
        return fn
    return deco


def get(theorem_id: str) -> Theorem:
    try:
        return REGISTRY[theorem_id]
    except KeyError:
        raise ConfigError(f"unknown theorem id {theorem_id!r}") from None


# -- instance construction -------------------------------------------------------------

def _law(tid, spec, rng, d, maker, requirements=()):
    """Draw (``"random"``) or parse a distribution, then enforce hypotheses."""
    if isinstance(spec, Distribution):
        law = spec
    elif spec in (None, "random"):
        law = maker(rng, d)
    elif isinstance(spec, dict):
        try:
            law = Distribution.from_json(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{tid}: bad distribution {spec!r}: {exc}") from exc
    else:
        raise ConfigError(f"{tid}: distribution must be 'random' or a JSON object, got {spec!r}")
    if law.dim != d:
        raise ConfigError(f"{tid}: distribution has dimension {law.dim}, expected {d}")
    for req in requirements:
        if not _certified(law, req):
            raise HypothesisError(tid, f"{req} ({law.family} supplied)")
    return law


def _certified(law: Distribution, req: str) -> bool:
    if req == "log-concave":
        return law.log_concave
    if req == "unconditional":
        return law.unconditional and law.log_concave
    if req == "radially-symmetric unimodal":
        return law.radially_symmetric
    if req == "radially-symmetric log-concave":
        return law.radially_symmetric and law.log_concave
    if req == "isotropic log-concave":
        return law.isotropic and law.log_concave
    raise ValueError(req)


def _scaled(T: ContractionSpec, lip: float) -> ContractionSpec:
    """Rescale T to Lipschitz constant ``lip`` (affine kinds) or compose with lip * I."""
    if not 0 <= lip <= 1:
        raise ConfigError(f"lip must lie in [0, 1], got {lip}")
    if T.is_linear_kind:
        A, b = T.linear_part()
        s = largest_singular_value(A)
        if s == 0:
            return T
        return ContractionSpec.affine(A * (lip / s), b, declared_lip=lip)
    base = lip_for_checks(T)
    fn = lambda x, T=T, lip=lip: lip * apply_map(T, x)
    out = ContractionSpec.sampled(fn, T.dim, declared_lip=lip * base)
    object.__setattr__(out, "params", dict(out.params, description=f"{lip:g} * ({describe(T).get('kind')})"))
    return out


def _contraction(tid, spec, rng, d, allowed=CONTRACTION_KINDS, lip=None) -> ContractionSpec:
    if isinstance(spec, ContractionSpec):
        T = spec
    elif isinstance(spec, str):
        kind = spec
        if kind == "mixed":
            kind = str(rng.choice(["affine", "coordinatewise", "sampled"]))
        if kind == "scaling":
            T = ContractionSpec.scaling(float(rng.uniform(0, 1)), d)
        elif kind in CONTRACTION_KINDS:
            T = random_contraction(rng, d, kind)
        else:
            raise ConfigError(f"{tid}: unknown contraction kind {spec!r}")
    elif isinstance(spec, dict):
        try:
            T = ContractionSpec.from_json(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{tid}: bad contraction {spec!r}: {exc}") from exc
    else:
        raise ConfigError(f"{tid}: contraction must be a kind name or a JSON object")
    if T.dim != d:
        raise ConfigError(f"{tid}: contraction has dimension {T.dim}, expected {d}")
    if T.kind not in allowed and not (T.kind == "diagonal" and "affine" in allowed):
        raise HypothesisError(tid, f"contraction kind must be one of {allowed}, got {T.kind}")
    if lip is not None:
        T = _scaled(T, float(lip))
    if lip_for_checks(T) > 1 + 1e-9:
        raise HypothesisError(tid, "T must be a contraction (Lipschitz constant <= 1)")
    return T


def _require_strong(tid, T: ContractionSpec):
    if T.kind in ("diagonal", "coordinatewise"):
        return
    if strong_contraction_violation(T) > STRONG_TOL:
        raise HypothesisError(tid, "T must be a strong contraction (each coordinate contracted)")


def _alphas(tid, params):
    alphas = params.get("alphas")
    if alphas is None:
        alphas = [params["alpha"]]
    out = []
    for a in alphas:
        a = math.inf if a in ("inf", "infinity", math.inf) else float(a)
        if not a > 0:
            raise ConfigError(f"{tid}: grid entropy rows need alpha > 0 (support volume is not "
                              "resolved by truncated grids), got {a}")
        out.append(a)
    return out


def _dim(tid, params, allowed=(1, 2)):
    d = int(params["d"])
    if d not in allowed:
        raise ConfigError(f"{tid}: dimension {d} not supported here (allowed {allowed})")
    return d


def _inputs(**kw) -> dict:
    out = {}
    for k, v in kw.items():
        if isinstance(v, ContractionSpec):
            out[k] = describe(v)
        elif hasattr(v, "to_json"):
            out[k] = v.to_json()
        else:
            out[k] = v
    return out


def _with_meta(rows, runtime_ms, inputs, extra_params=None):
    for r in rows:
        r.runtime_ms = max(r.runtime_ms, runtime_ms)
        r.details.setdefault("inputs", inputs)
        if extra_params:
            r.params = dict(extra_params, **r.params)
    return rows


def _scaled_float_budget(*values) -> float:
    finite = [abs(v) for v in values if math.isfinite(v)]
    return max(FLOAT_BUDGET, 1e-12 * max(finite, default=0.0))


# -- shared grid route ------------------------------------------------------------------

def _grid_rows(tid, X, W, T, alphas, ctx, with_majorization, base_params):
    """Entropy rows (one per alpha) plus, optionally, the majorization row."""
    d = T.dim
    with Timer() as tm:
        pair = sum_pair(X, W, T, ctx.cells)
        eps = budget.entropy_budget(d, pair.rel_spacing)
        rows = []
        for a in alphas:
            lhs, rhs = entropy_gap(pair, a)
            rows.append(CheckReport.build(
                tid, lhs, rhs, sense="le", grid_budget=2 * eps, provenance=("grid", "grid"), d=d,
                params=dict(base_params, alpha=a, claim="entropy"),
                details={"rel_spacing": pair.rel_spacing, "spacing": pair.spacing}))
        if with_majorization:
            v = majorization(pair)
            rows.append(CheckReport.build(
                tid, v.worst_deficit, 0.0, sense="le",
                grid_budget=2 * budget.mass_budget(d, pair.rel_spacing),
                provenance=("grid", "grid"), d=d, params=dict(base_params, claim="majorization"),
                details={"worst_radius": v.worst_radius, "rel_spacing": pair.rel_spacing,
                         "spacing": pair.spacing}))
    for r in rows:
        r.runtime_ms = tm.ms
    return rows


def _majorization_theorem(tid, params, ctx, x_req, w_req, t_allowed, x_maker, w_maker,
                          strong=False):
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, x_maker, x_req)
    W = _law(tid, params.get("W"), rng, d, w_maker, w_req)
    T = _contraction(tid, params.get("T"), rng, d, t_allowed, params.get("lip"))
    if strong:
        _require_strong(tid, T)
    rows = _grid_rows(tid, X, W, T, _alphas(tid, params), ctx, True, {"lip": lip_for_checks(T)})
    return _with_meta(rows, 0, _inputs(X=X, W=W, T=T))


ALPHAS = [0.5, 1, 2]
GRID_KNOBS = ("alpha", "lip", "d")


@register("T2.1-lambdaX", "theorem",
          "f_{X+W} is majorized by f_{lambda X + W} for log-concave X, W and lambda in (0, 1)",
          {"d": 1, "lambda": None, "alphas": ALPHAS, "X": "random", "W": "random"},
          knobs=("alpha", "lambda", "d"))
def _t21(params, ctx):
    tid = "T2.1-lambdaX"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, random_log_concave, ("log-concave",))
    W = _law(tid, params.get("W"), rng, d, random_log_concave, ("log-concave",))
    lam = params.get("lambda")
    lam = float(rng.choice([0.25, 0.5, 0.75])) if lam is None else float(lam)
    if not 0 <= lam <= 1:
        raise HypothesisError(tid, f"lambda must lie in [0, 1], got {lam}")
    T = ContractionSpec.scaling(lam, d)
    rows = _grid_rows(tid, X, W, T, _alphas(tid, params), ctx, True, {"lambda": lam})
    return _with_meta(rows, 0, _inputs(X=X, W=W, T=T))


@register("T2.2-radsymunimodXW", "theorem",
          "f_{X+W} is majorized by f_{T(X)+W} for radially-symmetric unimodal X, W and any contraction T",
          {"d": 2, "alphas": ALPHAS, "X": "random", "W": "random", "T": "sampled"}, knobs=GRID_KNOBS)
def _t22(params, ctx):
    req = ("radially-symmetric unimodal",)
    return _majorization_theorem("T2.2-radsymunimodXW", params, ctx, req, req, CONTRACTION_KINDS,
                                 random_radial, random_radial)


@register("T2.3-diagT", "theorem",
          "f_{X+W} is majorized by f_{T(X)+W} for log-concave X, unconditional log-concave W, diagonal T",
          {"d": 2, "alphas": ALPHAS, "X": "random", "W": "random", "T": "diagonal"}, knobs=GRID_KNOBS)
def _t23(params, ctx):
    return _majorization_theorem("T2.3-diagT", params, ctx, ("log-concave",), ("unconditional",),
                                 ("diagonal",), random_log_concave, random_unconditional)


@register("C2.2-affineT-radsymW", "corollary",
          "f_{X+W} is majorized by f_{T(X)+W} for log-concave X, radially-symmetric log-concave W, "
          "affine contraction T",
          {"d": 2, "alphas": ALPHAS, "X": "random", "W": "random", "T": "affine"}, knobs=GRID_KNOBS)
def _c22(params, ctx):
    return _majorization_theorem("C2.2-affineT-radsymW", params, ctx, ("log-concave",),
                                 ("radially-symmetric log-concave",), ("affine", "diagonal"),
                                 random_log_concave, random_radial)


@register("T2.4-strongT-unconditional", "theorem",
          "f_{X+W} is majorized by f_{T(X)+W} for unconditional log-concave X, W and strong contraction T",
          {"d": 2, "alphas": ALPHAS, "X": "random", "W": "random", "T": "coordinatewise"},
          knobs=GRID_KNOBS)
def _t24(params, ctx):
    return _majorization_theorem("T2.4-strongT-unconditional", params, ctx, ("unconditional",),
                                 ("unconditional",), CONTRACTION_KINDS, random_unconditional,
                                 random_unconditional, strong=True)


@register("C2.4-gradient-convexT", "corollary",
          "f_{X+W} is majorized by f_{T(X)+W} for unconditional log-concave X, radially-symmetric "
          "log-concave W and T = grad(phi) a contraction with phi convex",
          {"d": 2, "alphas": ALPHAS, "X": "random", "W": "random", "T": "gradient_convex"},
          knobs=GRID_KNOBS)
def _c24(params, ctx):
    return _majorization_theorem("C2.4-gradient-convexT", params, ctx, ("unconditional",),
                                 ("radially-symmetric log-concave",), ("gradient_convex",),
                                 random_unconditional, random_radial)


# -- convex bodies in the plane ---------------------------------------------------------

def _random_polygon(rng, n=8, spread=1.5) -> ConvexPolygon:
    while True:
        try:
            return ConvexPolygon.hull(rng.uniform(-spread, spread, (n, 2)))
        except DomainError:
            continue


def _polygon(tid, spec, rng) -> ConvexPolygon:
    if spec in (None, "random"):
        return _random_polygon(rng)
    try:
        return ConvexPolygon(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{tid}: bad polygon {spec!r}: {exc}") from exc


class _ConvexImage:
    """Convex hull of finitely many planar points, possibly a segment or a point."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        try:
            self.polygon = ConvexPolygon.hull(pts)
        except DomainError:
            self.polygon = None
            # farthest pair spans a degenerate hull
            diff = pts[:, None, :] - pts[None, :, :]
            i, j = np.unravel_index(np.argmax(np.sum(diff**2, axis=-1)), (len(pts), len(pts)))
            self.a, self.b = pts[i], pts[j]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def intrinsic_volumes(self):
        if self.polygon is not None:
            return intrinsic_volumes_2d(self.polygon)
        return 1.0, self.length, 0.0

    def parallel_area(self, r: float) -> float:
        if self.polygon is not None:
            return parallel_body_area(self.polygon, r)
        return 2 * self.length * r + math.pi * r * r

    def distance(self, x) -> np.ndarray:
        if self.polygon is not None:
            return self.polygon.distance(x)
        e = self.b - self.a
        ee = float(e @ e)
        t = np.clip((x - self.a) @ e / ee, 0, 1) if ee > 0 else np.zeros(len(x))
        return np.linalg.norm(x - (self.a + t[:, None] * e), axis=1)

    def bounds(self):
        if self.polygon is not None:
            return self.polygon.bounds()
        return np.minimum(self.a, self.b), np.maximum(self.a, self.b)


def _parallel_mc(bodies, r, mc: MCParams, name):
    """Hit-or-miss areas of body + rB for several bodies on shared points."""
    lows, highs = zip(*(b.bounds() for b in bodies))
    lower = np.min(lows, axis=0) - r
    upper = np.max(highs, axis=0) + r
    box = float(np.prod(upper - lower))
    sid = stream_id(name)

    def work(c, size):
        pts = lower + (upper - lower) * chunk_generator(mc.seed, sid, c).random((size, 2))
        return [int(np.count_nonzero(b.distance(pts) <= r)) for b in bodies]

    parts = map_chunks(work, mc.samples, mc.workers)
    n = mc.samples
    out = []
    for i in range(len(bodies)):
        p = sum(q[i] for q in parts) / n
        out.append((box * p, box * math.sqrt(p * (1 - p) / (n - 1))))
    return out


@register("C2.1-convexKlinearT", "corollary",
          "Vol(T(K) + rB) <= Vol(K + rB) for a convex body K and an affine contraction T",
          {"radius": 1.0, "K": "random", "T": "affine", "mc_check": True}, knobs=("lip", "samples"))
def _c21(params, ctx):
    tid = "C2.1-convexKlinearT"
    rng = ctx.rng
    K = _polygon(tid, params.get("K"), rng)
    T = _contraction(tid, params.get("T"), rng, 2, ("affine", "diagonal"), params.get("lip"))
    r = float(params["radius"])
    if not r > 0:
        raise ConfigError(f"{tid}: radius must be positive")
    with Timer() as tm:
        image = _ConvexImage(apply_map(T, K.vertices))
        source = _ConvexImage(K.vertices)
        lhs, rhs = image.parallel_area(r), parallel_body_area(K, r)
    rows = [CheckReport.build(tid, lhs, rhs, sense="le", float_budget=_scaled_float_budget(lhs, rhs),
                              provenance=("closed-form", "closed-form"), d=2, runtime_ms=tm.ms,
                              params={"radius": r, "route": "steiner"})]
    if params.get("mc_check", True):
        with Timer() as tm:
            (vy, sy), (vx, sx) = _parallel_mc([image, source], r, ctx.mc, "c21.parallel")
        rows.append(CheckReport.build(
            tid, vy, vx, sense="le", mc_stderrs=(sy, sx), provenance=("mc", "mc"), d=2,
            samples=ctx.mc.samples, runtime_ms=tm.ms, params={"radius": r, "route": "hit-or-miss"},
            details={"steiner_image": lhs, "steiner_source": rhs,
                     "agrees": bool(abs(vy - lhs) <= 3 * sy and abs(vx - rhs) <= 3 * sx)}))
    return _with_meta(rows, 0, _inputs(K=K.vertices.tolist(), T=T))


@register("C2.3-intrinsic-volumes", "corollary",
          "V_i(T[K]) <= V_i(K), i = 1, 2, for a planar convex body K and a linear contraction T",
          {"K": "random", "T": "affine"}, knobs=("lip",))
def _c23(params, ctx):
    tid = "C2.3-intrinsic-volumes"
    rng = ctx.rng
    K = _polygon(tid, params.get("K"), rng)
    T = _contraction(tid, params.get("T"), rng, 2, ("affine", "diagonal"), params.get("lip"))
    A, _ = T.linear_part()
    with Timer() as tm:
        img = _ConvexImage(K.vertices @ A.T).intrinsic_volumes()
        src = intrinsic_volumes_2d(K)
    rows = [CheckReport.build(tid, img[i], src[i], sense="le", float_budget=_scaled_float_budget(img[i], src[i]),
                              d=2, runtime_ms=tm.ms, params={"i": i}) for i in (1, 2)]
    return _with_meta(rows, 0, _inputs(K=K.vertices.tolist(), T=T))


# -- majorization lemmas -----------------------------------------------------------------

CONVEX_PHIS = {
    "square": lambda x: x * x,
    "cube": lambda x: x**3,
    "xlogx": lambda x: np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0),
    "neg_sqrt": lambda x: -np.sqrt(x),
    "hinge": lambda x: np.maximum(x - 0.5, 0.0),
}


def _robin_hood(rng, masses, transfers):
    """Average random pairs of cells: the result is majorized by the input."""
    m = masses.copy()
    n = m.size
    for _ in range(transfers):
        i, j = rng.choice(n, 2, replace=False)
        theta = rng.uniform(0, 1)
        a, b = m[i], m[j]
        m[i], m[j] = theta * a + (1 - theta) * b, (1 - theta) * a + theta * b
    return m


@register("L2.1-majorization-convex", "lemma",
          "f majorized by g implies int phi(f) <= int phi(g) for convex phi with phi(0) = 0",
          {"d": 1, "cells": 64, "transfers": 100, "phis": list(CONVEX_PHIS)}, knobs=("d",))
def _l21(params, ctx):
    tid = "L2.1-majorization-convex"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    n = int(params["cells"])
    shape = (n,) if d == 1 else (max(2, round(n ** (1 / d))),) * d
    spec = GridSpec(d, (0.0,) * d, 1.0 / shape[0], shape)
    with Timer() as tm:
        raw = rng.exponential(size=shape) * (rng.random(shape) < 0.7)
        raw.ravel()[0] += 1e-3
        g = DensityGrid(spec, raw / raw.sum()).normalize()
        fm = _robin_hood(rng, g.mass.ravel(), int(params["transfers"])).reshape(shape)
        f = DensityGrid(spec, fm / fm.sum()).normalize()
        v = majorizes(g, f)
        rows = [CheckReport.build(tid, v.worst_deficit, 0.0, sense="le", float_budget=FLOAT_BUDGET,
                                  provenance=("grid", "grid"), d=d, params={"claim": "majorization"})]
        for name in params["phis"]:
            if name not in CONVEX_PHIS:
                raise ConfigError(f"{tid}: unknown convex function {name!r}")
            lf, lg = convex_functional(f, CONVEX_PHIS[name]), convex_functional(g, CONVEX_PHIS[name])
            rows.append(CheckReport.build(tid, lf, lg, sense="le", float_budget=_scaled_float_budget(lf, lg),
                                          provenance=("grid", "grid"), d=d, params={"phi": name}))
    for r in rows:
        r.runtime_ms = tm.ms
    return rows


@register("L2.2-ball-cumulative", "lemma",
          "int_{B(0,r)} f* = sup over sets C with Vol(C) = Vol(B(0,r)) of int_C f, attained by "
          "super-level sets",
          {"d": 2, "cells": 24, "radii": 4, "competitors": 200}, knobs=("d",))
def _l22(params, ctx):
    tid = "L2.2-ball-cumulative"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    n = int(params["cells"])
    spec = GridSpec(d, (0.0,) * d, 1.0, (n,) * d)
    rows = []
    with Timer() as tm:
        raw = rng.exponential(size=spec.shape) ** 2
        f = DensityGrid(spec, raw / raw.sum()).normalize()
        flat = f.mass.ravel()
        order = np.argsort(-flat, kind="stable")
        _, dist2 = lattice_prefix(d, flat.size)
        for r in np.sort(rng.uniform(0.5, 0.45 * n, int(params["radii"]))):
            m = int(np.searchsorted(dist2, r * r * (1 + 1e-12), side="right"))
            m = min(m, flat.size)
            ball = ball_cumulative(f, float(r))
            level = math.fsum(flat[order[:m]])
            best = max(math.fsum(flat[rng.choice(flat.size, m, replace=False)])
                       for _ in range(int(params["competitors"])))
            base = {"radius": float(r), "cells_in_ball": m}
            rows.append(CheckReport.build(tid, abs(level - ball), 0.0, sense="le", float_budget=FLOAT_BUDGET,
                                          provenance=("grid", "grid"), d=d,
                                          params=dict(base, claim="attained-by-superlevel-set")))
            rows.append(CheckReport.build(tid, best, ball, sense="le", float_budget=FLOAT_BUDGET,
                                          provenance=("grid", "grid"), d=d,
                                          params=dict(base, claim="supremum-over-sets")))
    for r in rows:
        r.runtime_ms = tm.ms
    return rows


# -- Kneser-Poulsen conjectures ---------------------------------------------------------------

def _k(params, rng, lo=2):
    k = params.get("k")
    if k is None:
        return int(rng.integers(lo, int(params.get("k_max", 8)) + 1))
    k = int(k)
    if k < 1:
        raise ConfigError("k must be positive")
    return k


def _configuration(tid, params, rng, d, k, spread):
    spec = params.get("X")
    if isinstance(spec, dict):
        cfg = PointConfiguration.from_json(spec)
        if cfg.dim != d:
            raise ConfigError(f"{tid}: configuration has dimension {cfg.dim}, expected {d}")
        return cfg
    r = float(params.get("radius", 1.0))
    return PointConfiguration(rng.uniform(-spread, spread, (k, d)), r)


def _mc(ctx, params):
    mc = ctx.mc
    if params.get("max_samples") is not None:
        mc = MCParams(mc.samples, mc.seed, mc.workers, int(params["max_samples"]), mc.escalate)
    return mc


@register("CONJ1.1-kp-union", "conjecture",
          "Vol(union B(T x_i, r)) <= Vol(union B(x_i, r)) for any contraction T of the centers",
          {"d": 2, "k": None, "k_max": 8, "radius": 1.0, "T": "affine"},
          knobs=("k", "d", "samples", "lip"))
def _conj11(params, ctx):
    tid = "CONJ1.1-kp-union"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    k = _k(params, rng)
    r = float(params["radius"])
    X = _configuration(tid, params, rng, d, k, 0.8 * r * max(1.0, k ** (1 / d)))
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rep = kp_union_check(X, T, _mc(ctx, params), theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("CONJ1.2-kp-compact", "conjecture",
          "Vol(T(K) + rB) <= Vol(K + rB) for every compact K and contraction T",
          {"d": 2, "k": 16, "radius": None, "T": "sampled"}, knobs=("k", "d", "samples", "lip"))
def _conj12(params, ctx):
    tid = "CONJ1.2-kp-compact"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    k = _k(params, rng)
    r = params.get("radius")
    r = float(rng.uniform(0.3, 1.0)) if r is None else float(r)
    if isinstance(params.get("X"), dict):
        X = _configuration(tid, params, rng, d, k, 1.0)
    else:
        # a finite sample of a random compact set: points of a random segment chain
        knots = rng.uniform(-1.5, 1.5, (3, d))
        s = rng.uniform(0, 2, k)
        idx = np.minimum(s.astype(int), 1)
        frac = (s - idx)[:, None]
        X = PointConfiguration(knots[idx] * (1 - frac) + knots[idx + 1] * frac, r)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rep = kp_union_check(X, T, _mc(ctx, params), theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("CONJ1.3-kp-intersection", "conjecture",
          "Vol(intersection B(T x_i, r)) >= Vol(intersection B(x_i, r)) for any contraction T",
          {"d": 2, "k": None, "k_max": 5, "radius": 1.0, "T": "affine"},
          knobs=("k", "d", "samples", "lip"))
def _conj13(params, ctx):
    tid = "CONJ1.3-kp-intersection"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    k = _k(params, rng)
    r = float(params["radius"])
    X = _configuration(tid, params, rng, d, k, 0.5 * r)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rep = kp_intersection_check(X, T, _mc(ctx, params), theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("C1.1-intenttrue", "corollary",
          "h_alpha(T(X) + W) <= h_alpha(X + W) for discrete X, W uniform on a ball, alpha = 2..d+3",
          {"d": 2, "k": 5, "radius": 1.0, "alphas": None, "weights": "uniform", "T": "affine"},
          knobs=("alpha", "k", "d", "samples", "lip"))
def _c11(params, ctx):
    tid = "C1.1-intenttrue"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    alphas = params.get("alphas")
    if alphas is None:
        alphas = [params["alpha"]] if params.get("alpha") is not None else list(range(2, d + 4))
    for a in alphas:
        if float(a) != int(a) or not 2 <= int(a) <= d + 3:
            raise HypothesisError(tid, f"alpha must be an integer in 2..{d + 3}, got {a}")
    k = _k(params, rng)
    r = float(params["radius"])
    X = _configuration(tid, params, rng, d, k, 1.5 * r)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    w = params.get("weights", "uniform")
    if w == "uniform":
        weights = None
    elif w == "random":
        weights = rng.dirichlet(np.ones(X.k))
    else:
        weights = np.asarray(w, dtype=float)
    rows = [mixture_renyi_check(X, T, int(a), weights, ctx.mc, theorem_id=tid) for a in alphas]
    return _with_meta(rows, 0, _inputs(X=X, T=T, weights=None if weights is None else list(weights)))


def _random_any(rng, d):
    """Any supported law, including non-log-concave Gaussian mixtures."""
    if rng.random() < 0.4:
        k = int(rng.integers(2, 4))
        return Distribution.gaussian_mixture(rng.dirichlet(np.ones(k)), rng.uniform(-2.5, 2.5, (k, d)),
                                             float(rng.uniform(0.3, 0.8)))
    return random_log_concave(rng, d)


@register("Q1.1-big-question", "question",
          "h_alpha(T(X) + W) <= h_alpha(X + W) for independent X, W and a contraction T "
          "(the general question, no extra assumptions)",
          {"d": 1, "alphas": [0.5, 1, 2, math.inf], "X": "random", "W": "random", "T": "sampled"},
          knobs=GRID_KNOBS)
def _q11(params, ctx):
    tid = "Q1.1-big-question"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, _random_any)
    W = _law(tid, params.get("W"), rng, d, _random_any)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rows = _grid_rows(tid, X, W, T, _alphas(tid, params), ctx, False, {"lip": lip_for_checks(T)})
    return _with_meta(rows, 0, _inputs(X=X, W=W, T=T))


# -- Gaussian entropy power ---------------------------------------------------------------

def _random_spd(rng, d, lo=0.3, hi=2.0):
    Q = random_rotation(rng, d)
    return Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T


def _epi_input(tid, spec, rng, d, maker=None):
    """Gaussian laws take the closed-form route; other laws the grid route."""
    if spec in (None, "gaussian"):
        return GaussianLaw(rng.uniform(-1, 1, d), _random_spd(rng, d))
    if spec == "isotropic_gaussian":
        return GaussianLaw(None, float(rng.uniform(0.3, 2.0)) * np.eye(d))
    if isinstance(spec, dict) and "cov" in spec and "family" not in spec:
        return GaussianLaw.from_json(spec)
    return _law(tid, spec, rng, d, maker or random_log_concave)


@register("T3.1-vector-epi", "theorem",
          "N(X + S^(1/2) Z) >= det(I - S)^(1/d) N(X) + det(S)^(1/d) N(X + Z) for S commuting with "
          "Cov(Z) = Sigma, 0 <= S <= I",
          {"d": 2, "X": "gaussian"}, knobs=("d",))
def _t31(params, ctx):
    tid = "T3.1-vector-epi"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    X = _epi_input(tid, params.get("X"), rng, d)
    Q = random_rotation(rng, d)
    Sigma = params.get("Sigma")
    Sigma = Q @ np.diag(rng.uniform(0.3, 2.0, d)) @ Q.T if Sigma is None else np.asarray(Sigma, float)
    S = params.get("S")
    S = Q @ np.diag(rng.uniform(0, 1, d)) @ Q.T if S is None else np.asarray(S, float)
    try:
        rep = check_vector_epi(X, S, Sigma, ctx.cells, theorem_id=tid)
    except ValueError as exc:
        raise HypothesisError(tid, str(exc)) from exc
    return _with_meta([rep], 0, _inputs(X=X))


@register("T3.2-linear-epi", "theorem",
          "N(X + Z) >= N(T(X) + Z) + (1 - Lip(T)^2) N(X) for a linear contraction T and standard Gaussian Z",
          {"d": 2, "X": "gaussian", "T": "affine"}, knobs=("lip", "d"))
def _t32(params, ctx):
    tid = "T3.2-linear-epi"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    X = _epi_input(tid, params.get("X"), rng, d)
    T = _contraction(tid, params.get("T"), rng, d, ("affine", "diagonal"), params.get("lip"))
    rep = check_linear_epi(X, T, ctx.cells, theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("T3.3-gaussian-strong", "theorem",
          "N(G + Z) >= N(T(G) + Z) + (1 - Lip(T)^2) N(G) for Gaussian G with diagonal covariance and "
          "strong contraction T (checked through the Gaussian maximum-entropy bound)",
          {"d": 2, "Lambda": None, "T": "coordinatewise", "report_entropy": False},
          knobs=("lip", "d", "samples"))
def _t33(params, ctx):
    tid = "T3.3-gaussian-strong"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    lam = params.get("Lambda")
    lam = rng.uniform(0.25, 2.0, d) if lam is None else np.asarray(lam, dtype=float)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    if not (np.allclose(lam, lam[0]) or T.kind in ("diagonal", "coordinatewise")):
        _require_strong(tid, T)
    try:
        rep = check_gaussian_strong(lam, T, ctx.mc, report_entropy=bool(params.get("report_entropy")),
                                    theorem_id=tid)
    except ValueError as exc:
        raise HypothesisError(tid, str(exc)) from exc
    return _with_meta([rep], 0, _inputs(Lambda=lam.tolist(), T=T))


@register("T3.4-isotropic-lc", "theorem",
          "N(X + Z) >= N(T(X) + Z) + (1 - (e^Delta Lip(T))^2) N(X) for isotropic log-concave X",
          {"d": 1, "X": "random", "T": "affine"}, knobs=("lip", "d"))
def _t34(params, ctx):
    tid = "T3.4-isotropic-lc"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, random_isotropic_log_concave, ("isotropic log-concave",))
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rep = check_isotropic_lc(X, T, ctx.cells, theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("C3.1-isotropic-threshold", "corollary",
          "h(T(X) + Z) <= h(X + Z) for isotropic log-concave X when Lip(T) <= sqrt(e / (2 pi)) / L_X",
          {"d": 1, "X": "random", "T": "affine"}, knobs=("d",))
def _c31(params, ctx):
    tid = "C3.1-isotropic-threshold"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, random_isotropic_log_concave, ("isotropic log-concave",))
    Z = Distribution.gaussian(np.zeros(d), np.eye(d))
    h = resolve_spacing([X, Z], ctx.cells)
    limit = isotropic_threshold(isotropic_constant(as_grid(X, h)))
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS)
    lip = lip_for_checks(T)
    if lip > limit:
        T = _scaled(T, limit * float(rng.uniform(0.5, 1.0)))
    rep = check_isotropic_threshold(X, T, ctx.cells, theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


@register("D3.1-delta-LX", "definition",
          "log(sqrt(2 pi / e) L_X) <= Delta(X) for log-concave X (Delta: entropy gap to the Gaussian)",
          {"d": 1, "X": "random"}, knobs=("d",))
def _d31(params, ctx):
    tid = "D3.1-delta-LX"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, random_log_concave, ("log-concave",))
    h = resolve_spacing([X], ctx.cells)
    f = as_grid(X, h)
    if d == 1 and not is_log_concave_1d(f):
        raise HypothesisError(tid, "grid of X fails the log-concavity test")
    rep = check_delta_lx(f, relative_spacing([X], h), theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X))


@register("Q3.1-open-strengthened", "question",
          "N(X + Z) >= N(T(X) + Z) + (1 - Lip(T)^2) N(X) for arbitrary X and any contraction T",
          {"d": 1, "X": "random", "T": "sampled"}, knobs=("lip", "d"))
def _q31(params, ctx):
    tid = "Q3.1-open-strengthened"
    d = _dim(tid, params)
    rng = ctx.rng
    spec = params.get("X")
    X = _epi_input(tid, spec, rng, d) if spec == "gaussian" else _law(tid, spec, rng, d, random_log_concave)
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    rep = open_question_check(X, T, ctx.cells, theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, T=T))


# -- diversity ------------------------------------------------------------------------------------

T_LADDER = [10.0, 100.0, 1e3, 1e4, 1e5]


@register("L4.1-scaling-limit", "lemma",
          "C_d D_t^2(X) / t^d -> e^{h_2(X)} as t -> infinity",
          {"d": 1, "X": {"family": "uniform_box", "dim": 1, "lower": [0.0], "upper": [1.0]},
           "t_ladder": T_LADDER, "rtol": 0.05}, knobs=("d",))
def _l41(params, ctx):
    tid = "L4.1-scaling-limit"
    d = _dim(tid, params)
    rng = ctx.rng
    spec = params.get("X")
    if isinstance(spec, dict) and spec.get("dim", d) != d:
        spec = "random"
    X = _law(tid, spec, rng, d, random_log_concave)
    f = as_grid(X, resolve_spacing([X], ctx.cells))
    rep = scaling_limit_check(f, params["t_ladder"], float(params["rtol"]), theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X))


def _discrete(tid, params, rng, d):
    spec = params.get("X")
    if isinstance(spec, dict):
        return DiscreteLaw(spec["weights"], spec["points"])
    k = _k(params, rng)
    pts = rng.uniform(-2, 2, (k, d))
    return DiscreteLaw.uniform(pts) if params.get("weights", "random") == "uniform" \
        else DiscreteLaw(rng.dirichlet(np.ones(k)), pts)


def _radial_noise(rng, d):
    if rng.random() < 0.5:
        return Distribution.gaussian(np.zeros(d), float(rng.uniform(0.1, 1.0)) * np.eye(d))
    return Distribution.uniform_ball(d, float(rng.uniform(0.3, 1.5)))


@register("T4.2-h2-contraction", "theorem",
          "D_t^2(T(X) + W) <= D_t^2(X + W) for any X, radially-symmetric log-concave W, contraction T",
          {"d": 2, "k": None, "k_max": 8, "W": "random", "T": "mixed", "t_list": [0.5, 1, 2, 5]},
          knobs=("t", "k", "d", "samples", "lip"))
def _t42(params, ctx):
    tid = "T4.2-h2-contraction"
    d = _dim(tid, params, (1, 2, 3))
    rng = ctx.rng
    X = _discrete(tid, params, rng, d)
    W = _law(tid, params.get("W"), rng, d, _radial_noise, ("radially-symmetric log-concave",))
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    t_list = [params["t"]] if params.get("t") is not None else params["t_list"]
    rep = check_h2_contraction(X, W, T, t_list, ctx.mc, theorem_id=tid)
    return _with_meta([rep], 0, _inputs(X=X, W=W, T=T))


@register("C4.3-renyi-gap", "corollary",
          "h_alpha(T(X) + W) <= h_alpha(X + W) + sgn(2 - alpha)(log alpha / (alpha - 1) - log 2) d for "
          "log-concave X, radially-symmetric log-concave W and any contraction T",
          {"d": 2, "alphas": [0.5, 1, 2, 5, math.inf], "X": "random", "W": "random", "T": "sampled"},
          knobs=GRID_KNOBS)
def _c43(params, ctx):
    tid = "C4.3-renyi-gap"
    d = _dim(tid, params)
    rng = ctx.rng
    X = _law(tid, params.get("X"), rng, d, random_log_concave, ("log-concave",))
    W = _law(tid, params.get("W"), rng, d, random_radial, ("radially-symmetric log-concave",))
    T = _contraction(tid, params.get("T"), rng, d, CONTRACTION_KINDS, params.get("lip"))
    with Timer() as tm:
        pair = sum_pair(X, W, T, ctx.cells)
    rows = [check_renyi_gap(X, W, T, a, ctx.cells, theorem_id=tid, pair=pair) for a in _alphas(tid, params)]
    return _with_meta(rows, tm.ms, _inputs(X=X, W=W, T=T))


# The registry must cover exactly these ids (checked by the self-test).
MANIFEST = (
    "T2.1-lambdaX", "T2.2-radsymunimodXW", "T2.3-diagT", "C2.1-convexKlinearT",
    "C2.2-affineT-radsymW", "C2.3-intrinsic-volumes", "T2.4-strongT-unconditional",
    "C2.4-gradient-convexT", "L2.1-majorization-convex", "L2.2-ball-cumulative",
    "CONJ1.1-kp-union", "CONJ1.2-kp-compact", "CONJ1.3-kp-intersection", "C1.1-intenttrue",
    "Q1.1-big-question", "T3.1-vector-epi", "T3.2-linear-epi", "T3.3-gaussian-strong",
    "T3.4-isotropic-lc", "C3.1-isotropic-threshold", "D3.1-delta-LX", "Q3.1-open-strengthened",
    "L4.1-scaling-limit", "T4.2-h2-contraction", "C4.3-renyi-gap",
)
