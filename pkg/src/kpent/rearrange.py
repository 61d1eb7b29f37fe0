"""Symmetric decreasing rearrangement and the majorization order on grids.

On a piecewise-constant density the rearrangement is a reassignment of the
cell masses: the largest mass goes to the cell at the origin, the next ones to
the lattice cells at increasing distance from it.  Cells at equal distance
are filled in descending lexicographic order of their signed offset (so
``+spacing`` precedes ``-spacing`` in 1-D); equal masses keep their original
row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, IncompatibleGridError
from .grid import DensityGrid, GridSpec, _require_normalized

SPACING_RTOL = 1e-12


@dataclass(frozen=True)
class MajorizationVerdict:
    holds: bool
    worst_radius: float
    worst_deficit: float
    tolerance_used: float


@lru_cache(maxsize=32)
def _lattice_order(dim: int, half_width: int):
    """Integer offsets of the cube [-w, w]^dim in rearrangement order.

    Only the prefix with squared norm <= w^2 is returned: past that radius
    the cube no longer contains every lattice point of a given norm.
    """
    r = np.arange(-half_width, half_width + 1)
    mesh = np.meshgrid(*([r] * dim), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=-1)
    dist2 = np.sum(offsets**2, axis=1)
    keys = tuple(-offsets[:, i] for i in reversed(range(dim))) + (dist2,)
    order = np.lexsort(keys)
    offsets, dist2 = offsets[order], dist2[order]
    n = np.searchsorted(dist2, half_width**2, side="right")
    offsets, dist2 = offsets[:n], dist2[:n]
    offsets.setflags(write=False)
    dist2.setflags(write=False)
    return offsets, dist2


def _unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def lattice_prefix(dim: int, count: int):
    """Offsets and squared norms of at least ``count`` cells, complete tie groups."""
    w = max(1, math.ceil((count / _unit_ball_volume(dim)) ** (1 / dim)) + 1)
    while True:
        offsets, dist2 = _lattice_order(dim, w)
        if len(dist2) >= count:
            # extend to the end of the tie group of the count-th cell
            end = np.searchsorted(dist2, dist2[count - 1], side="right")
            return offsets[:end], dist2[:end]
        w *= 2


def _sorted_masses(f: DensityGrid) -> np.ndarray:
    flat = f.mass.ravel()
    pos = np.flatnonzero(flat > 0)
    # stable sort keeps original row-major order among equal masses
    order = np.argsort(-flat[pos], kind="stable")
    return flat[pos][order]


def rearrange(f: DensityGrid) -> DensityGrid:
    """Symmetric decreasing rearrangement, on a centered odd-sized cube."""
    _require_normalized(f)
    masses = _sorted_masses(f)
    offsets, _ = lattice_prefix(f.dim, masses.size)
    offsets = offsets[: masses.size]
    w = int(np.abs(offsets).max()) if offsets.size else 0
    n = 2 * w + 1
    h = f.spacing
    spec = GridSpec(f.dim, (-(w + 0.5) * h,) * f.dim, h, (n,) * f.dim)
    out = np.zeros(spec.shape)
    out[tuple((offsets + w).T)] = masses
    return DensityGrid(spec, out)


def _cumulative_profile(f: DensityGrid, count: int):
    """Cumulative rearranged mass after 0..count cells (padded with 1 past support)."""
    masses = _sorted_masses(f)
    cum = np.ones(count + 1)
    cum[0] = 0.0
    k = min(count, masses.size)
    # round-off must not push a partial sum above the total mass of 1
    cum[1 : k + 1] = np.minimum(np.cumsum(masses[:k]), 1.0)
    if k == masses.size:
        cum[k:] = 1.0
    return cum


def _ladder(dim: int, count: int):
    """Distinct squared radii (in cell units) and the cell count inside each."""
    _, dist2 = lattice_prefix(dim, count)
    levels, first = np.unique(dist2, return_index=True)
    counts = np.append(first[1:], len(dist2))
    return levels, counts


def ball_cumulative(f: DensityGrid, r: float) -> float:
    """Mass of the rearranged density on cells whose centers lie within ``r``."""
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    _require_normalized(f)
    masses = _sorted_masses(f)
    rr = (r / f.spacing) ** 2 * (1 + 1e-12)
    _, dist2 = lattice_prefix(f.dim, masses.size)
    inside = int(np.searchsorted(dist2, rr, side="right"))
    if inside >= masses.size:
        return 1.0
    return math.fsum(masses[:inside])


def majorizes(g: DensityGrid, f: DensityGrid, tolerance: float = 0.0) -> MajorizationVerdict:
    """Check ``f`` is majorized by ``g`` on the discrete radius ladder.

    ``worst_deficit`` is the largest ``cumulative_f(r) - cumulative_g(r)``;
    positive values mean the order fails at ``worst_radius``.
    """
    if f.dim != g.dim:
        raise IncompatibleGridError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if not math.isclose(f.spacing, g.spacing, rel_tol=SPACING_RTOL):
        raise IncompatibleGridError(f"spacing mismatch: {f.spacing} vs {g.spacing}")
    _require_normalized(f)
    _require_normalized(g)
    count = max(f.support_count(), g.support_count())
    levels, counts = _ladder(f.dim, count)
    total = int(counts[-1])
    cf = _cumulative_profile(f, total)[counts]
    cg = _cumulative_profile(g, total)[counts]
    deficit = cf - cg
    i = int(np.argmax(deficit))
    worst = float(deficit[i])
    return MajorizationVerdict(
        holds=worst <= tolerance,
        worst_radius=float(math.sqrt(levels[i]) * f.spacing),
        worst_deficit=worst,
        tolerance_used=float(tolerance),
    )


def convex_functional(f: DensityGrid, phi) -> float:
    """Integral of ``phi(density)`` over the grid (phi(0) = 0 assumed)."""
    dens = f.density[f.mass > 0]
    return math.fsum(np.asarray(phi(dens), dtype=float) * f.spec.cell_volume)
