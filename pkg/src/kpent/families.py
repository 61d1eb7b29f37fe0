"""Distribution families with validity certificates, and random instance generators.

Each :class:`Distribution` knows which hypothesis classes it belongs to
(log-concave, unconditional, radially symmetric, isotropic) *by construction*,
so theorem checks can refuse inputs outside their hypotheses before any
numerics run.  Only in one dimension is log-concavity also verified on the
grid itself (:func:`is_log_concave_1d`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError
from .grid import DensityGrid, GridSpec, gaussian_density, make_grid

# tails are cut where the density falls below 1e-14 of its peak
TAIL_LOG = math.log(1e14)
SUBCELLS = 8
LOG_CONCAVE_TOL = 1e-9

FAMILIES = ("gaussian", "uniform_box", "laplace", "gen_gaussian", "radial", "uniform_ball",
            "gaussian_mixture")


def _unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True, eq=False)
class Distribution:
    """A named continuous law on R^d that can be gridded and sampled.

    ``gaussian``          mean, cov
    ``uniform_box``       lower, upper
    ``laplace``           loc, scale      (independent coordinates)
    ``gen_gaussian``      loc, scale, p   (independent exp(-|x/s|^p) coordinates)
    ``radial``            scale, p        (density proportional to exp(-(|x|/s)^p))
    ``uniform_ball``      center, radius
    ``gaussian_mixture``  weights, means, sigma (not log-concave in general)
    """

    family: str
    dim: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown distribution family {self.family!r}")
        if self.dim not in (1, 2, 3):
            raise DomainError("dim must be 1, 2 or 3")
        p = {k: (np.asarray(v, dtype=float) if isinstance(v, (list, tuple, np.ndarray)) else v)
             for k, v in self.params.items()}
        object.__setattr__(self, "params", p)
        if self.family in ("radial", "gen_gaussian") and not 1 <= p.get("p", 2.0) <= 2:
            raise DomainError("radial/gen_gaussian exponent p must lie in [1, 2]")

    # -- constructors -------------------------------------------------------------

    @classmethod
    def gaussian(cls, mean, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls("gaussian", cov.shape[0], {"mean": np.atleast_1d(mean).astype(float), "cov": cov})

    @classmethod
    def uniform_box(cls, lower, upper):
        lo, hi = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        if np.any(hi <= lo):
            raise DomainError("uniform_box needs upper > lower")
        return cls("uniform_box", len(lo), {"lower": lo, "upper": hi})

    @classmethod
    def laplace(cls, loc, scale):
        loc, scale = np.atleast_1d(loc).astype(float), np.atleast_1d(scale).astype(float)
        return cls("laplace", len(loc), {"loc": loc, "scale": np.broadcast_to(scale, loc.shape).copy()})

    @classmethod
    def gen_gaussian(cls, loc, scale, p):
        loc, scale = np.atleast_1d(loc).astype(float), np.atleast_1d(scale).astype(float)
        return cls("gen_gaussian", len(loc),
                   {"loc": loc, "scale": np.broadcast_to(scale, loc.shape).copy(), "p": float(p)})

    @classmethod
    def radial(cls, dim, scale=1.0, p=2.0):
        return cls("radial", dim, {"scale": float(scale), "p": float(p)})

    @classmethod
    def uniform_ball(cls, dim, radius=1.0, center=None):
        c = np.zeros(dim) if center is None else np.atleast_1d(center).astype(float)
        return cls("uniform_ball", dim, {"center": c, "radius": float(radius)})

    @classmethod
    def gaussian_mixture(cls, weights, means, sigma):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        if means.shape[0] == 1 and np.ndim(weights) and len(weights) > 1:
            means = means.T
        return cls("gaussian_mixture", means.shape[1],
                   {"weights": np.asarray(weights, dtype=float), "means": means, "sigma": float(sigma)})

    # -- certificates ----------------------------------------------------------------

    @property
    def log_concave(self) -> bool:
        return self.family != "gaussian_mixture"

    @property
    def centered(self) -> bool:
        p = self.params
        if self.family == "gaussian":
            return bool(np.allclose(p["mean"], 0))
        if self.family == "uniform_box":
            return bool(np.allclose(p["lower"], -p["upper"]))
        if self.family in ("laplace", "gen_gaussian"):
            return bool(np.allclose(p["loc"], 0))
        if self.family == "uniform_ball":
            return bool(np.allclose(p["center"], 0))
        return self.family == "radial"

    @property
    def unconditional(self) -> bool:
        """Invariant under independent coordinate sign flips."""
        if not self.centered:
            return False
        if self.family == "gaussian":
            cov = self.params["cov"]
            return bool(np.allclose(cov, np.diag(np.diag(cov))))
        return self.family != "gaussian_mixture"

    @property
    def radially_symmetric(self) -> bool:
        """Radially symmetric and unimodal about the origin."""
        if not self.centered:
            return False
        if self.family in ("radial", "uniform_ball"):
            return True
        if self.dim == 1:
            return self.family != "gaussian_mixture"
        if self.family == "gaussian":
            cov = self.params["cov"]
            return bool(np.allclose(cov, cov[0, 0] * np.eye(self.dim)))
        return False

    @property
    def isotropic(self) -> bool:
        cov = self.covariance()
        return bool(np.allclose(cov, cov[0, 0] * np.eye(self.dim), rtol=1e-12, atol=1e-14))

    # -- moments --------------------------------------------------------------------

    def covariance(self) -> np.ndarray:
        p, d = self.params, self.dim
        if self.family == "gaussian":
            return p["cov"].copy()
        if self.family == "uniform_box":
            return np.diag((p["upper"] - p["lower"]) ** 2 / 12)
        if self.family == "laplace":
            return np.diag(2 * p["scale"] ** 2)
        if self.family == "gen_gaussian":
            q = p["p"]
            return np.diag(p["scale"] ** 2 * gamma_fn(3 / q) / gamma_fn(1 / q))
        if self.family == "radial":
            q, s = p["p"], p["scale"]
            return np.eye(d) * s * s * gamma_fn((d + 2) / q) / gamma_fn(d / q) / d
        if self.family == "uniform_ball":
            return np.eye(d) * p["radius"] ** 2 / (d + 2)
        w, m, s = p["weights"], p["means"], p["sigma"]
        mu = w @ m
        dev = m - mu
        return (dev * w[:, None]).T @ dev + s * s * np.eye(d)

    def min_std(self) -> float:
        return float(np.sqrt(np.linalg.eigvalsh(self.covariance()).min()))

    def max_std(self) -> float:
        return float(np.sqrt(np.linalg.eigvalsh(self.covariance()).max()))

    # -- support, density, gridding -----------------------------------------------

    def support_box(self):
        p, d = self.params, self.dim
        if self.family == "gaussian":
            half = 8.0 * np.sqrt(np.diag(p["cov"]))
            return p["mean"] - half, p["mean"] + half
        if self.family == "uniform_box":
            return p["lower"].copy(), p["upper"].copy()
        if self.family == "laplace":
            return p["loc"] - TAIL_LOG * p["scale"], p["loc"] + TAIL_LOG * p["scale"]
        if self.family == "gen_gaussian":
            half = p["scale"] * TAIL_LOG ** (1 / p["p"])
            return p["loc"] - half, p["loc"] + half
        if self.family == "radial":
            half = p["scale"] * TAIL_LOG ** (1 / p["p"])
            return -np.full(d, half), np.full(d, half)
        if self.family == "uniform_ball":
            return p["center"] - p["radius"], p["center"] + p["radius"]
        half = 8.0 * p["sigma"]
        return p["means"].min(axis=0) - half, p["means"].max(axis=0) + half

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        p, d = self.params, self.dim
        if self.family == "gaussian":
            return gaussian_density(p["mean"], p["cov"])(x)
        if self.family == "uniform_box":
            inside = np.all((x >= p["lower"]) & (x <= p["upper"]), axis=1)
            return inside / float(np.prod(p["upper"] - p["lower"]))
        if self.family == "laplace":
            b = p["scale"]
            return np.exp(-np.sum(np.abs(x - p["loc"]) / b, axis=1)) / float(np.prod(2 * b))
        if self.family == "gen_gaussian":
            s, q = p["scale"], p["p"]
            norm = float(np.prod(2 * s * gamma_fn(1 + 1 / q)))
            return np.exp(-np.sum(np.abs((x - p["loc"]) / s) ** q, axis=1)) / norm
        if self.family == "radial":
            s, q = p["scale"], p["p"]
            norm = d * _unit_ball_volume(d) * s**d * gamma_fn(d / q) / q
            return np.exp(-(np.linalg.norm(x, axis=1) / s) ** q) / norm
        if self.family == "uniform_ball":
            r = p["radius"]
            inside = np.linalg.norm(x - p["center"], axis=1) <= r
            return inside / (_unit_ball_volume(d) * r**d)
        out = np.zeros(len(x))
        for w, m in zip(p["weights"], p["means"]):
            out += w * gaussian_density(m, p["sigma"] ** 2 * np.eye(d))(x)
        return out

    def grid(self, spacing: float) -> DensityGrid:
        """Grid the law with the given spacing on its (truncated) support box."""
        lo, hi = self.support_box()
        spec = GridSpec.covering(lo, hi, spacing)
        if self.family == "uniform_box":
            return _box_grid(spec, self.params["lower"], self.params["upper"])
        if self.family == "uniform_ball":
            return _subcell_grid(spec, self.pdf)
        return make_grid(spec, self.pdf)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p, d = self.params, self.dim
        if self.family == "gaussian":
            L = np.linalg.cholesky(p["cov"] + 1e-300 * np.eye(d))
            return p["mean"] + rng.standard_normal((n, d)) @ L.T
        if self.family == "uniform_box":
            return p["lower"] + (p["upper"] - p["lower"]) * rng.random((n, d))
        if self.family == "laplace":
            return p["loc"] + rng.laplace(0.0, 1.0, (n, d)) * p["scale"]
        if self.family == "gen_gaussian":
            q = p["p"]
            mag = rng.gamma(1 / q, 1.0, (n, d)) ** (1 / q)
            sign = np.where(rng.random((n, d)) < 0.5, -1.0, 1.0)
            return p["loc"] + sign * mag * p["scale"]
        if self.family in ("radial", "uniform_ball"):
            u = rng.standard_normal((n, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            if self.family == "radial":
                q = p["p"]
                r = p["scale"] * rng.gamma(d / q, 1.0, n) ** (1 / q)
                return u * r[:, None]
            r = p["radius"] * rng.random(n) ** (1 / d)
            return p["center"] + u * r[:, None]
        comp = rng.choice(len(p["weights"]), size=n, p=p["weights"])
        return p["means"][comp] + p["sigma"] * rng.standard_normal((n, d))

    # -- serialization ----------------------------------------------------------------

    def to_json(self) -> dict:
        return {"family": self.family, "dim": self.dim,
                **{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "Distribution":
        d = dict(d)
        family = d.pop("family")
        dim = d.pop("dim", None)
        if dim is None:
            raise DomainError("distribution JSON needs a 'dim'")
        return cls(family, int(dim), d)


def _box_grid(spec: GridSpec, lower, upper) -> DensityGrid:
    """Exact cell masses of a uniform box (products of 1-D overlaps)."""
    mass = np.ones(())
    for ax, (lo, hi) in zip(spec.axes(), zip(lower, upper)):
        h = spec.spacing
        left = ax - h / 2
        overlap = np.clip(np.minimum(left + h, hi) - np.maximum(left, lo), 0.0, None)
        mass = np.multiply.outer(mass, overlap / (hi - lo))
    return DensityGrid(spec, mass).normalize()


def _subcell_grid(spec: GridSpec, pdf) -> DensityGrid:
    """Cell averages of a discontinuous density by SUBCELLS^d midpoint sampling."""
    h = spec.spacing
    ticks = ((np.arange(SUBCELLS) + 0.5) / SUBCELLS - 0.5) * h
    sub = np.stack([m.ravel() for m in np.meshgrid(*([ticks] * spec.dim), indexing="ij")], axis=-1)
    centers = spec.cell_centers()
    acc = np.zeros(len(centers))
    for s in sub:
        acc += pdf(centers + s)
    return DensityGrid(spec, (acc / len(sub)).reshape(spec.shape) * spec.cell_volume).normalize()


def is_log_concave_1d(f: DensityGrid, tol: float = LOG_CONCAVE_TOL) -> bool:
    """Second differences of log-mass are <= tol on the support, which is an interval."""
    if f.dim != 1:
        raise DomainError("grid log-concavity is only tested in one dimension")
    m = f.mass
    pos = np.flatnonzero(m > 0)
    if pos.size == 0:
        return False
    if pos[-1] - pos[0] + 1 != pos.size:
        return False
    lm = np.log(m[pos[0]: pos[-1] + 1])
    return bool(np.all(np.diff(lm, 2) <= tol))


# -- random instance generators ---------------------------------------------------------

def random_log_concave(rng: np.random.Generator, dim: int) -> Distribution:
    """One of Gaussian / uniform box / Laplace / generalized Gaussian, random scale and shift."""
    kind = rng.integers(4)
    loc = rng.uniform(-1, 1, dim)
    scale = rng.uniform(0.5, 1.5, dim)
    if kind == 0:
        Q = _random_rotation(rng, dim)
        return Distribution.gaussian(loc, Q @ np.diag(scale**2) @ Q.T)
    if kind == 1:
        return Distribution.uniform_box(loc - 1.7 * scale, loc + 1.7 * scale)
    if kind == 2:
        return Distribution.laplace(loc, scale)
    return Distribution.gen_gaussian(loc, scale, rng.uniform(1, 2))


def random_unconditional(rng: np.random.Generator, dim: int) -> Distribution:
    """Centered product law (symmetrized coordinates): unconditional and log-concave."""
    kind = rng.integers(4)
    scale = rng.uniform(0.5, 1.5, dim)
    zero = np.zeros(dim)
    if kind == 0:
        return Distribution.gaussian(zero, np.diag(scale**2))
    if kind == 1:
        return Distribution.uniform_box(-1.7 * scale, 1.7 * scale)
    if kind == 2:
        return Distribution.laplace(zero, scale)
    return Distribution.gen_gaussian(zero, scale, rng.uniform(1, 2))


def random_radial(rng: np.random.Generator, dim: int) -> Distribution:
    """Radial profile exp(-(|x|/s)^p) with p in [1, 2]."""
    return Distribution.radial(dim, rng.uniform(0.5, 1.5), rng.uniform(1, 2))


def random_isotropic_log_concave(rng: np.random.Generator, dim: int) -> Distribution:
    """Gaussian s^2 I, centered cube, or i.i.d. generalized-Gaussian coordinates."""
    kind = rng.integers(3)
    s = rng.uniform(0.5, 1.5)
    zero = np.zeros(dim)
    if kind == 0:
        return Distribution.gaussian(zero, s * s * np.eye(dim))
    if kind == 1:
        return Distribution.uniform_box(-s * np.ones(dim), s * np.ones(dim))
    return Distribution.gen_gaussian(zero, s, rng.uniform(1, 2))


def _random_rotation(rng, dim):
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Q * np.sign(np.diag(R))
