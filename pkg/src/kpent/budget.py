"""Discretization budget ε_grid by halving-spacing self-calibration.

The grid pipeline (gridding, pushforward, convolution, entropy or
rearrangement) is run on reference problems whose continuum answers are known
in closed form:

* Gaussian X and W with a linear T (all sums stay Gaussian);
* uniform-box X and W with a diagonal T (sums are products of trapezoids).

The largest per-side error, divided by the relative spacing ``spacing /
sigma_min``, is measured at a reference spacing and at half of it; the budget
constant is twice the larger of the two ratios.  Budgets are then

    entropy (nats, per grid-derived side):   C_h * spacing / sigma_min
    cumulative mass (per grid-derived side): C_m * spacing / sigma_min

and a comparison of two grid-derived quantities carries the sum of the two
per-side budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .contract import ContractionSpec
from .families import Distribution
from .grid import renyi_entropy
from .pipeline import sum_pair
from .rearrange import _cumulative_profile, _ladder

SAFETY = 2.0
CAL_ALPHAS = (0.25, 0.5, 1.0, 2.0, 5.0, math.inf)
# reference cells (Gaussian-equivalent cells across +/- 8 sigma) per dimension;
# calibration runs at these and at twice these
CAL_CELLS = {1: 128, 2: 48, 3: 16}


# -- closed forms -------------------------------------------------------------------

def gaussian_renyi(cov, alpha) -> float:
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    base = 0.5 * math.log(np.linalg.det(2 * math.pi * cov))
    if alpha == 1:
        return base + d / 2
    if math.isinf(alpha):
        return base
    return base + d * math.log(alpha) / (2 * (alpha - 1))


def trapezoid_renyi(a, b, alpha) -> float:
    """Rényi entropy of U(width a) + U(width b)."""
    a, b = max(a, b), min(a, b)
    if alpha == 1:
        return math.log(a) + b / (2 * a)
    if math.isinf(alpha):
        return math.log(a)
    integral = 2 * b ** (alpha + 1) / ((alpha + 1) * (a * b) ** alpha) + (a - b) * a ** (-alpha)
    return math.log(integral) / (1 - alpha)


def trapezoid_cumulative(a, b, volume) -> np.ndarray:
    """Rearranged cumulative mass of U(a) + U(b) at the given superlevel lengths."""
    a, b = max(a, b), min(a, b)
    v = np.asarray(volume, dtype=float)
    flat = np.minimum(v, a - b) / a
    u = np.clip((v - (a - b)) / 2, 0.0, b)
    return np.minimum(flat + (b * b - (b - u) ** 2) / (a * b), 1.0)


def gaussian_cumulative(cov, volume) -> np.ndarray:
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    v = np.asarray(volume, dtype=float)
    if d == 1:
        return erf(v / (2 * math.sqrt(2 * cov[0, 0])))
    if d == 2:
        return 1 - np.exp(-v / (2 * math.pi * math.sqrt(np.linalg.det(cov))))
    raise ValueError("Gaussian cumulative implemented for d <= 2")


# -- reference problems ------------------------------------------------------------------

@dataclass(frozen=True)
class _Reference:
    X: Distribution
    W: Distribution
    T: ContractionSpec
    plain_h: object        # alpha -> exact h_alpha(X + W)
    mapped_h: object       # alpha -> exact h_alpha(T(X) + W)
    plain_cum: object      # volumes -> exact cumulative of X + W (or None)
    mapped_cum: object


def _references(dim):
    refs = []
    # Gaussian / linear
    if dim == 1:
        sx, sw, A = np.array([[1.0]]), np.array([[0.36]]), np.array([[0.65]])
    else:
        th = 0.4
        R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])[:dim, :dim] \
            if dim == 2 else np.eye(dim)
        sx = R @ np.diag(np.linspace(1.0, 0.6, dim) ** 2) @ R.T
        sw = 0.36 * np.eye(dim)
        A = np.diag(np.linspace(0.7, 0.5, dim))
    cp, cm = sx + sw, A @ sx @ A.T + sw
    refs.append(_Reference(
        Distribution.gaussian(np.zeros(dim), sx), Distribution.gaussian(np.zeros(dim), sw),
        ContractionSpec.affine(A),
        lambda a, c=cp: gaussian_renyi(c, a), lambda a, c=cm: gaussian_renyi(c, a),
        (lambda v, c=cp: gaussian_cumulative(c, v)) if dim <= 2 else None,
        (lambda v, c=cm: gaussian_cumulative(c, v)) if dim <= 2 else None,
    ))
    # uniform boxes / diagonal
    wx = np.linspace(2.0, 1.6, dim)
    ww = np.full(dim, 1.0)
    lam = np.linspace(0.7, 0.6, dim)
    hp = lambda a, wx=wx, ww=ww: sum(trapezoid_renyi(x, w, a) for x, w in zip(wx, ww))
    hm = lambda a, wx=wx, ww=ww, lam=lam: sum(trapezoid_renyi(l * x, w, a) for x, w, l in zip(wx, ww, lam))
    refs.append(_Reference(
        Distribution.uniform_box(-wx / 2, wx / 2), Distribution.uniform_box(-ww / 2, ww / 2),
        ContractionSpec.diagonal(lam), hp, hm,
        (lambda v: trapezoid_cumulative(wx[0], ww[0], v)) if dim == 1 else None,
        (lambda v: trapezoid_cumulative(lam[0] * wx[0], ww[0], v)) if dim == 1 else None,
    ))
    return refs


def _cumulative_error(grid, exact_cum):
    count = grid.support_count()
    _, counts = _ladder(grid.dim, count)
    cum = _cumulative_profile(grid, int(counts[-1]))[counts]
    vol = counts * grid.spec.cell_volume
    return float(np.max(np.abs(cum - exact_cum(vol))))


@dataclass(frozen=True)
class Calibration:
    dim: int
    entropy_constant: float
    mass_constant: float
    measurements: tuple      # (reference, cells, rel_spacing, entropy err, mass err)

    def entropy_budget(self, rel_spacing: float) -> float:
        """Per-side entropy error bound (nats) at relative spacing spacing/sigma_min."""
        return self.entropy_constant * rel_spacing

    def mass_budget(self, rel_spacing: float) -> float:
        """Per-side cumulative-mass error bound at relative spacing spacing/sigma_min."""
        return self.mass_constant * rel_spacing


@lru_cache(maxsize=None)
def calibrate(dim: int) -> Calibration:
    """Measure the pipeline's discretization error on closed-form references."""
    rows = []
    ent_ratio = mass_ratio = 0.0
    for i, ref in enumerate(_references(dim)):
        for cells in (CAL_CELLS[dim], 2 * CAL_CELLS[dim]):
            pair = sum_pair(ref.X, ref.W, ref.T, cells=cells)
            e_h = max(max(abs(renyi_entropy(pair.plain, a) - ref.plain_h(a)),
                          abs(renyi_entropy(pair.mapped, a) - ref.mapped_h(a)))
                      for a in CAL_ALPHAS)
            e_m = 0.0
            if ref.plain_cum is not None:
                e_m = max(_cumulative_error(pair.plain, ref.plain_cum),
                          _cumulative_error(pair.mapped, ref.mapped_cum))
            rows.append((i, cells, pair.rel_spacing, e_h, e_m))
            ent_ratio = max(ent_ratio, e_h / pair.rel_spacing)
            mass_ratio = max(mass_ratio, e_m / pair.rel_spacing)
    return Calibration(dim, SAFETY * ent_ratio, SAFETY * mass_ratio, tuple(rows))


def entropy_budget(dim: int, rel_spacing: float) -> float:
    return calibrate(dim).entropy_budget(rel_spacing)


def mass_budget(dim: int, rel_spacing: float) -> float:
    return calibrate(dim).mass_budget(rel_spacing)
