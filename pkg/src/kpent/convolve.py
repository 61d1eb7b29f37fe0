"""Densities of independent sums X + W on grids.

Cell ``i`` of ``f`` plus cell ``j`` of ``g`` lands in output cell ``i + j``;
the output origin is ``f.origin + g.origin + spacing / 2`` so that cell
centers add exactly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import fft

from .errors import IncompatibleGridError, NumericError
from .grid import DensityGrid, GridSpec

TRIM_THRESHOLD = 1e-16
CLAMP_LIMIT = 1e-10
SPACING_RTOL = 1e-12
# cells whose FFT round-off bound exceeds this fraction of their value are re-summed
REFINE_RTOL = 1e-13
# largest (cells to re-sum) x (support of the smaller factor) handled exactly
REFINE_BUDGET = 2**26

# pocketfft runs in 80-bit extended precision on x86, which shrinks the set of
# cells the refinement pass has to re-sum
_FFT_DTYPE = np.longdouble if np.finfo(np.longdouble).eps < np.finfo(np.float64).eps else np.float64


def _check_compatible(f: DensityGrid, g: DensityGrid):
    if f.dim != g.dim:
        raise IncompatibleGridError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if not math.isclose(f.spacing, g.spacing, rel_tol=SPACING_RTOL):
        raise IncompatibleGridError(f"spacing mismatch: {f.spacing} vs {g.spacing}")


def _output_spec(f: DensityGrid, g: DensityGrid) -> GridSpec:
    h = f.spacing
    origin = np.asarray(f.spec.origin) + np.asarray(g.spec.origin) + h / 2
    shape = tuple(a + b - 1 for a, b in zip(f.spec.shape, g.spec.shape))
    return GridSpec(f.dim, tuple(origin), h, shape)


def _finish(spec: GridSpec, mass: np.ndarray) -> DensityGrid:
    out = DensityGrid(spec, mass).trimmed(TRIM_THRESHOLD)
    return out.normalize()


def convolve_direct(f: DensityGrid, g: DensityGrid) -> DensityGrid:
    """Exact O(n_f * n_g) convolution, used as the oracle for :func:`convolve`."""
    _check_compatible(f, g)
    spec = _output_spec(f, g)
    out = np.zeros(spec.shape)
    gm = g.mass
    for idx in zip(*np.nonzero(f.mass)):
        sl = tuple(slice(i, i + n) for i, n in zip(idx, gm.shape))
        out[sl] += f.mass[idx] * gm
    return _finish(spec, out)


def convolve(f: DensityGrid, g: DensityGrid) -> DensityGrid:
    """FFT convolution zero-padded to the full linear size (no wraparound)."""
    _check_compatible(f, g)
    spec = _output_spec(f, g)
    shape = spec.shape
    fshape = [fft.next_fast_len(s, real=True) for s in shape]
    axes = tuple(range(f.dim))
    F = fft.rfftn(f.mass.astype(_FFT_DTYPE), fshape, axes=axes)
    F *= fft.rfftn(g.mass.astype(_FFT_DTYPE), fshape, axes=axes)
    out = fft.irfftn(F, fshape, axes=axes)[tuple(slice(0, s) for s in shape)]
    out = np.asarray(out, dtype=np.float64)
    neg = out < 0
    clamped = float(-out[neg].sum())
    if clamped >= CLAMP_LIMIT:
        raise NumericError(
            f"FFT round-off produced {clamped:.3g} of negative mass",
            {"clamped": clamped, "shape": shape},
        )
    out[neg] = 0.0
    # the direct sum is exactly zero wherever either factor's contribution is;
    # round-off noise below the trim threshold is not mass
    out[out < TRIM_THRESHOLD * 1e-3] = 0.0
    _refine(out, f, g, math.prod(fshape))
    return _finish(spec, out)


def _refine(out: np.ndarray, f: DensityGrid, g: DensityGrid, fft_size: int):
    """Re-sum, exactly, the cells where FFT round-off could exceed REFINE_RTOL.

    FFT error is absolute, about eps * log(n) * |f|_2 |g|_2 in every cell, so
    small cells (tails, corners) lose relative accuracy.  Those cells are
    recomputed by direct summation when the work fits REFINE_BUDGET; beyond
    it the fast path keeps only its absolute accuracy.
    """
    eps = float(np.finfo(_FFT_DTYPE).eps)
    bound = 8 * math.log2(fft_size + 1) * eps * float(np.linalg.norm(f.mass) * np.linalg.norm(g.mass))
    risky = (out >= TRIM_THRESHOLD - bound) & (out < bound / REFINE_RTOL)
    cells = np.argwhere(risky)
    if not len(cells):
        return
    a, b = (f, g) if np.count_nonzero(f.mass) <= np.count_nonzero(g.mass) else (g, f)
    idx = np.argwhere(a.mass > 0)
    vals = a.mass[tuple(idx.T)]
    if len(cells) * len(idx) > REFINE_BUDGET:
        return
    shape = np.asarray(b.mass.shape)
    step = max(1, 2**22 // len(idx))
    for start in range(0, len(cells), step):
        c = cells[start:start + step]
        j = c[:, None, :] - idx[None, :, :]
        ok = np.all((j >= 0) & (j < shape), axis=-1)
        j = np.where(ok[..., None], j, 0)
        terms = np.where(ok, b.mass[tuple(np.moveaxis(j, -1, 0))] * vals, 0.0)
        out[tuple(c.T)] = terms.sum(axis=1)


def aligned_pair(f: DensityGrid, g: DensityGrid):
    """Embed two same-spacing grids into one common index frame.

    Returns ``(spec, fm, gm)`` with both mass arrays on ``spec``.  Origins must
    differ by whole cells (within 1e-6 of a cell).
    """
    _check_compatible(f, g)
    h = f.spacing
    off = (np.asarray(g.spec.origin) - np.asarray(f.spec.origin)) / h
    shift = np.rint(off).astype(int)
    if np.any(np.abs(off - shift) > 1e-6):
        raise IncompatibleGridError("grid origins are not lattice-aligned")
    lo = np.minimum(0, shift)
    hi = np.maximum(np.asarray(f.spec.shape), shift + np.asarray(g.spec.shape))
    shape = tuple(int(s) for s in hi - lo)
    spec = GridSpec(f.dim, tuple(np.asarray(f.spec.origin) + lo * h), h, shape)
    fm = np.zeros(shape)
    gm = np.zeros(shape)
    fm[tuple(slice(-l, -l + n) for l, n in zip(lo, f.spec.shape))] = f.mass
    gm[tuple(slice(s - l, s - l + n) for s, l, n in zip(shift, lo, g.spec.shape))] = g.mass
    return spec, fm, gm
