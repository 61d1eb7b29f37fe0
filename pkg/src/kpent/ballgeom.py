"""Volumes of unions and intersections of congruent balls and the KP checks.

All Monte Carlo volumes are hit-or-miss estimates over an axis-aligned box,
drawn from the counter-based streams of :mod:`kpent.rng`.  When two
configurations are compared they are evaluated on the *same* sample points
(common random numbers), so most of the sampling noise cancels in the margin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import betainc

from .contract import ContractionSpec, apply_map
from .errors import DomainError, PreconditionError
from .report import FLOAT_BUDGET, CheckReport, Timer
from .rng import chunk_generator, map_chunks, stream_id

CONTRACTIVE_SLACK = 1e-12
MIN_SAMPLES = 10_000


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """k ball centers in R^d sharing one radius."""

    centers: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DomainError("centers must be a non-empty (k, d) array")
        if not np.all(np.isfinite(c)):
            raise DomainError("centers must be finite")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise DomainError(f"radius must be positive, got {self.radius}")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def bounding_box(self):
        return self.centers.min(axis=0) - self.radius, self.centers.max(axis=0) + self.radius

    def with_radius(self, r: float) -> "PointConfiguration":
        return PointConfiguration(self.centers, r)

    def mapped(self, T: ContractionSpec) -> "PointConfiguration":
        return PointConfiguration(apply_map(T, self.centers), self.radius)

    def pairwise_distances(self) -> np.ndarray:
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def to_json(self) -> dict:
        return {"dim": self.dim, "radius": self.radius, "centers": self.centers.tolist()}

    @classmethod
    def from_json(cls, d) -> "PointConfiguration":
        if isinstance(d, str):
            d = json.loads(d)
        cfg = cls(d["centers"], d.get("radius", 1.0))
        if "dim" in d and d["dim"] != cfg.dim:
            raise DomainError(f"declared dim {d['dim']} does not match centers of dim {cfg.dim}")
        return cfg


@dataclass(frozen=True)
class MCParams:
    """Sampling parameters shared by every Monte Carlo estimator."""

    samples: int = 1_000_000
    seed: int = 0
    workers: int = 1
    max_samples: int = 100_000_000
    escalate: bool = True

    def __post_init__(self):
        if self.samples < 1:
            raise DomainError("samples must be positive")
        if self.workers < 1:
            raise DomainError("workers must be positive")

    def with_samples(self, n: int) -> "MCParams":
        return MCParams(n, self.seed, self.workers, self.max_samples, self.escalate)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo value with its standard error, sample count and seed."""

    value: float
    stderr: float
    samples: int
    seed: int
    details: dict = field(default_factory=dict, compare=False, repr=False)

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr


def _require_samples(mc: MCParams):
    if mc.samples < MIN_SAMPLES:
        raise DomainError(f"Monte Carlo volumes need at least {MIN_SAMPLES} samples, got {mc.samples}")


def _ball_mask(points, centers, r2, mode):
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=-1) <= r2
    return d2.any(axis=1) if mode == "union" else d2.all(axis=1)


def _box_points(lower, upper, seed, stream, c, size):
    rng = chunk_generator(seed, stream, c)
    return lower + (upper - lower) * rng.random((size, len(lower)))


def shared_volumes(cfgs: Sequence[PointConfiguration], mode: str, mc: MCParams,
                   box=None, stream: str = None) -> List[MCEstimate]:
    """Union or intersection volumes of several configurations on common points.

    The sample box defaults to the smallest box holding every configuration's
    own sampling box.  Also records, in ``details["discordant"]``, how many
    points were classified differently by the first two configurations.
    """
    if mode not in ("union", "intersection"):
        raise DomainError(f"mode must be 'union' or 'intersection', got {mode!r}")
    _require_samples(mc)
    dims = {c.dim for c in cfgs}
    if len(dims) != 1:
        raise DomainError("configurations must share a dimension")
    if box is None:
        boxes = [_own_box(c, mode) for c in cfgs]
        box = (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))
    lower, upper = (np.asarray(b, dtype=float) for b in box)
    vol = float(np.prod(upper - lower))
    sid = stream_id(stream or f"ballgeom.{mode}")

    def work(c, size):
        pts = _box_points(lower, upper, mc.seed, sid, c, size)
        masks = [_ball_mask(pts, cfg.centers, cfg.radius ** 2, mode) for cfg in cfgs]
        hits = [int(m.sum()) for m in masks]
        disc = int(np.count_nonzero(masks[0] != masks[1])) if len(masks) > 1 else 0
        return hits, disc

    parts = map_chunks(work, mc.samples, mc.workers)
    n = mc.samples
    discordant = sum(p[1] for p in parts)
    out = []
    for i in range(len(cfgs)):
        hits = sum(p[0][i] for p in parts)
        p = hits / n
        sd = math.sqrt(p * (1 - p) * n / (n - 1)) if n > 1 else 0.0
        out.append(MCEstimate(vol * p, vol * sd / math.sqrt(n), n, mc.seed,
                              {"hits": hits, "box_volume": vol, "discordant": discordant}))
    return out


def _own_box(cfg: PointConfiguration, mode: str):
    if mode == "union":
        return cfg.bounding_box()
    c = cfg.centers[0]
    return c - cfg.radius, c + cfg.radius


def union_volume(cfg: PointConfiguration, mc: MCParams = MCParams()) -> MCEstimate:
    """Hit-or-miss volume of the union of the balls over their bounding box."""
    return shared_volumes([cfg], "union", mc)[0]


def intersection_volume(cfg: PointConfiguration, mc: MCParams = MCParams()) -> MCEstimate:
    """Hit-or-miss volume of the intersection, sampled in the box of the first ball."""
    return shared_volumes([cfg], "intersection", mc)[0]


def is_contractive_pair(X: PointConfiguration, Y: PointConfiguration) -> bool:
    """True iff every pairwise distance of Y is at most the matching one of X."""
    if X.k != Y.k or X.dim != Y.dim:
        raise DomainError(f"configuration sizes differ: {(X.k, X.dim)} vs {(Y.k, Y.dim)}")
    return bool(np.all(Y.pairwise_distances() <= X.pairwise_distances() + CONTRACTIVE_SLACK))


# -- closed forms -------------------------------------------------------------------

def ball_volume(dim: int, r: float = 1.0) -> float:
    # recurrence omega_d = 2 pi / d * omega_{d-2} keeps omega_1 = 2 exact
    omega = 2.0 if dim % 2 else 1.0
    for k in range(2 + dim % 2, dim + 1, 2):
        omega *= 2 * math.pi / k
    return omega * r**dim


def lens_area(dist: float, r: float) -> float:
    """Area of the intersection of two radius-r disks whose centers are dist apart."""
    if dist < 0 or not r > 0:
        raise DomainError("lens_area needs dist >= 0 and r > 0")
    if dist >= 2 * r:
        return 0.0
    return 2 * r * r * math.acos(dist / (2 * r)) - 0.5 * dist * math.sqrt(4 * r * r - dist * dist)


def two_ball_intersection_volume(dist: float, r: float, dim: int) -> float:
    """Volume of B(x, r) cap B(y, r) with |x - y| = dist, any dimension.

    Twice the volume of a spherical cap of height r - dist/2, written with the
    regularized incomplete beta function.
    """
    if dist < 0 or not r > 0:
        raise DomainError("need dist >= 0 and r > 0")
    if dist >= 2 * r:
        return 0.0
    if dim == 2:
        return lens_area(dist, r)
    a = dist / (2 * r)
    return ball_volume(dim, r) * float(betainc((dim + 1) / 2, 0.5, 1 - a * a))


# -- conjecture checks ---------------------------------------------------------------

def _target(X: PointConfiguration, T) -> PointConfiguration:
    if isinstance(T, PointConfiguration):
        return T
    return X.mapped(T)


def _kp_check(theorem_id, X, Y, mode, mc, sense):
    if not is_contractive_pair(X, Y):
        raise PreconditionError("image configuration is not a contraction of the source")
    if X.radius != Y.radius:
        raise DomainError("only congruent radii are supported")
    with Timer() as tm:
        params = mc
        while True:
            est_y, est_x = shared_volumes([Y, X], mode, params, stream=f"kp.{mode}")
            margin = est_y.value - est_x.value if sense == "ge" else est_x.value - est_y.value
            combined = est_x.stderr + est_y.stderr
            tight = abs(margin) < 3 * combined and est_x.details["discordant"] > 0
            nxt = params.samples * 10
            if not (params.escalate and tight and nxt <= params.max_samples):
                break
            params = params.with_samples(nxt)
    return CheckReport.build(
        theorem_id, est_y.value, est_x.value, sense=sense,
        mc_stderrs=(est_y.stderr, est_x.stderr),
        provenance=("mc", "mc"), seed=mc.seed, runtime_ms=tm.ms, k=X.k, d=X.dim,
        samples=params.samples, params={"radius": X.radius},
        details={"discordant": est_x.details["discordant"], "escalated_to": params.samples},
    )


def kp_union_check(X: PointConfiguration, T, mc: MCParams = MCParams(),
                   theorem_id: str = "CONJ1.1-kp-union") -> CheckReport:
    """Vol(union of B(T x_i, r)) <= Vol(union of B(x_i, r)) on paired samples.

    ``T`` is a :class:`ContractionSpec` or directly the image configuration.
    """
    return _kp_check(theorem_id, X, _target(X, T), "union", mc, "le")


def kp_intersection_check(X: PointConfiguration, T, mc: MCParams = MCParams(),
                          theorem_id: str = "CONJ1.3-kp-intersection") -> CheckReport:
    """Vol(intersection of B(T x_i, r)) >= Vol(intersection of B(x_i, r)).

    Two balls are handled exactly through the cap formula.
    """
    Y = _target(X, T)
    if X.k != 2:
        return _kp_check(theorem_id, X, Y, "intersection", mc, "ge")
    if not is_contractive_pair(X, Y):
        raise PreconditionError("image configuration is not a contraction of the source")
    with Timer() as tm:
        lhs = two_ball_intersection_volume(float(Y.pairwise_distances()[0, 1]), Y.radius, Y.dim)
        rhs = two_ball_intersection_volume(float(X.pairwise_distances()[0, 1]), X.radius, X.dim)
    return CheckReport.build(theorem_id, lhs, rhs, sense="ge", float_budget=FLOAT_BUDGET,
                             provenance=("closed-form", "closed-form"), seed=mc.seed,
                             runtime_ms=tm.ms, k=2, d=X.dim, params={"radius": X.radius})


# -- Renyi entropies of ball mixtures -----------------------------------------------------

def _weights(p, k):
    p = np.full(k, 1.0 / k) if p is None else np.asarray(p, dtype=float)
    if p.shape != (k,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise DomainError("weights must be a probability vector matching the centers")
    return p


def mixture_power_integral(cfgs: Sequence[PointConfiguration], weights, n: int,
                           mc: MCParams) -> List[MCEstimate]:
    """Integral of f^n for f = sum_i p_i Uniform(B(x_i, r)), for each configuration.

    ``n = 2`` is exact (pairwise two-ball intersections); higher integer
    orders are estimated on common sample points.
    """
    if int(n) != n or n < 2:
        raise DomainError("order must be an integer >= 2")
    k = cfgs[0].k
    p = _weights(weights, k)
    vb = ball_volume(cfgs[0].dim, cfgs[0].radius)
    if n == 2:
        out = []
        for cfg in cfgs:
            dist = cfg.pairwise_distances()
            inter = np.vectorize(lambda s: two_ball_intersection_volume(s, cfg.radius, cfg.dim))(dist)
            out.append(MCEstimate(math.fsum((np.outer(p, p) * inter).ravel()) / vb**2, 0.0, 0, mc.seed))
        return out
    _require_samples(mc)
    boxes = [c.bounding_box() for c in cfgs]
    lower = np.min([b[0] for b in boxes], axis=0)
    upper = np.max([b[1] for b in boxes], axis=0)
    vol = float(np.prod(upper - lower))
    sid = stream_id(f"ballgeom.mixture{n}")

    def work(c, size):
        pts = _box_points(lower, upper, mc.seed, sid, c, size)
        res = []
        for cfg in cfgs:
            inside = np.sum((pts[:, None, :] - cfg.centers[None]) ** 2, axis=-1) <= cfg.radius**2
            vals = (inside @ p / vb) ** n
            res.append((math.fsum(vals), math.fsum(vals * vals)))
        return res

    parts = map_chunks(work, mc.samples, mc.workers)
    N = mc.samples
    out = []
    for i in range(len(cfgs)):
        s1 = math.fsum(q[i][0] for q in parts)
        s2 = math.fsum(q[i][1] for q in parts)
        mean = s1 / N
        var = max(s2 / N - mean * mean, 0.0) * N / (N - 1)
        out.append(MCEstimate(vol * mean, vol * math.sqrt(var / N), N, mc.seed))
    return out


def mixture_renyi_check(X: PointConfiguration, T, alpha: int, weights=None,
                        mc: MCParams = MCParams(),
                        theorem_id: str = "C1.1-intenttrue") -> CheckReport:
    """h_alpha(T(X) + W) <= h_alpha(X + W) for discrete X and W uniform on a ball.

    Compared through the equivalent ``integral f_TX^alpha >= integral f_X^alpha``;
    reported sides are the entropies, the tolerance is propagated to entropy
    units by the delta method.
    """
    Y = _target(X, T)
    if not is_contractive_pair(X, Y):
        raise PreconditionError("image configuration is not a contraction of the source")
    with Timer() as tm:
        iy, ix = mixture_power_integral([Y, X], weights, alpha, mc)
    hy = math.log(iy.value) / (1 - alpha)
    hx = math.log(ix.value) / (1 - alpha)
    # d h = d I / ((alpha - 1) I)
    se = (iy.stderr / iy.value + ix.stderr / ix.value) / (alpha - 1)
    exact = alpha == 2
    return CheckReport.build(
        theorem_id, hy, hx, sense="le",
        mc_stderrs=() if exact else (se,), float_budget=FLOAT_BUDGET if exact else 0.0,
        provenance=("closed-form", "closed-form") if exact else ("mc", "mc"),
        seed=mc.seed, runtime_ms=tm.ms, k=X.k, d=X.dim, samples=0 if exact else mc.samples,
        params={"alpha": alpha, "radius": X.radius},
        details={"integral_image": iy.value, "integral_source": ix.value},
    )
