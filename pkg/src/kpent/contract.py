"""Contraction maps, Lipschitz constants, pushforwards and small-matrix SVD."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CoverageError, DomainError, EstimationError, NumericError
from .grid import DensityGrid, GridSpec, _require_normalized

AFFINE_LIP_SLACK = 1e-12
COVERAGE_TOL = 1e-6
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


# -- 1-D component maps (coordinatewise kind) -------------------------------

@dataclass(frozen=True)
class ComponentMap:
    """Named 1-Lipschitz map R -> R, vectorized and JSON-serializable.

    ``linear``     a*x + b with |a| <= 1
    ``softclamp``  c*tanh((x - m)/c) + b
    ``blend``      s*x + (1 - s)*c*tanh(x/c) + b with s in [0, 1]
    ``clip``       clip(x, lo, hi)
    ``fold``       |x - m| + b
    """

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _COMPONENTS:
            raise DomainError(f"unknown component map {self.name!r}")
        if self.name == "linear" and abs(self.params.get("a", 1.0)) > 1:
            raise DomainError("linear component needs |a| <= 1")
        if self.name == "blend" and not 0 <= self.params.get("s", 0.5) <= 1:
            raise DomainError("blend component needs s in [0, 1]")

    def __call__(self, x):
        return _COMPONENTS[self.name](np.asarray(x, dtype=float), **self.params)

    @property
    def lip(self) -> float:
        """Analytic Lipschitz constant of the component."""
        return abs(self.params.get("a", 1.0)) if self.name == "linear" else 1.0

    def to_dict(self):
        return {"name": self.name, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("name"), d)


_COMPONENTS = {
    "linear": lambda x, a=1.0, b=0.0: a * x + b,
    "softclamp": lambda x, c=1.0, m=0.0, b=0.0: c * np.tanh((x - m) / c) + b,
    "blend": lambda x, s=0.5, c=1.0, b=0.0: s * x + (1 - s) * c * np.tanh(x / c) + b,
    "clip": lambda x, lo=-1.0, hi=1.0: np.clip(x, lo, hi),
    "fold": lambda x, m=0.0, b=0.0: np.abs(x - m) + b,
}


# -- convex potentials (gradient_convex kind) --------------------------------

@dataclass(frozen=True)
class PotentialTerm:
    """One summand of a smooth convex potential with known Hessian bound.

    ``quadratic``  0.5 x'Px                      grad Px
    ``logcosh``    w c^2 log cosh(<u,x>/c)       grad w c u tanh(<u,x>/c)
    ``huber``      w * huber_c(|x - z|)          grad w (x - z) min(1, c/|x - z|)
    """

    type: str
    params: dict

    def value(self, x):
        p = self.params
        if self.type == "quadratic":
            P = np.asarray(p["P"], dtype=float)
            return 0.5 * np.einsum("ni,ij,nj->n", x, P, x)
        if self.type == "logcosh":
            u, c, w = np.asarray(p["u"], dtype=float), p["c"], p.get("w", 1.0)
            z = x @ u / c
            return w * c * c * (np.abs(z) + np.log1p(np.exp(-2 * np.abs(z))) - math.log(2))
        if self.type == "huber":
            c, w = p["c"], p.get("w", 1.0)
            r = np.linalg.norm(x - np.asarray(p.get("z", 0.0)), axis=1)
            return w * np.where(r <= c, 0.5 * r * r, c * r - 0.5 * c * c)
        raise DomainError(f"unknown potential term {self.type!r}")

    def gradient(self, x):
        p = self.params
        if self.type == "quadratic":
            return x @ np.asarray(p["P"], dtype=float).T
        if self.type == "logcosh":
            u, c, w = np.asarray(p["u"], dtype=float), p["c"], p.get("w", 1.0)
            return w * c * np.tanh(x @ u / c)[:, None] * u
        if self.type == "huber":
            c, w = p["c"], p.get("w", 1.0)
            dev = x - np.asarray(p.get("z", 0.0))
            r = np.linalg.norm(dev, axis=1)
            scale = np.minimum(1.0, c / np.maximum(r, 1e-300))
            return w * dev * scale[:, None]
        raise DomainError(f"unknown potential term {self.type!r}")

    def hessian_bound(self) -> float:
        p = self.params
        if self.type == "quadratic":
            return float(np.linalg.eigvalsh(np.asarray(p["P"], dtype=float)).max())
        if self.type == "logcosh":
            return p.get("w", 1.0) * float(np.dot(p["u"], p["u"]))
        return p.get("w", 1.0)

    def to_dict(self):
        return {"type": self.type, **_jsonable(self.params)}


def _jsonable(params):
    return {k: (np.asarray(v).tolist() if isinstance(v, (np.ndarray, list, tuple)) else v)
            for k, v in params.items()}


# -- ContractionSpec ---------------------------------------------------------

KINDS = ("affine", "diagonal", "coordinatewise", "gradient_convex", "sampled")


@dataclass(frozen=True, eq=False)
class ContractionSpec:
    """Tagged description of a map T: R^d -> R^d.

    Build with the classmethods (:meth:`affine`, :meth:`diagonal`, ...) so the
    invariants of each kind are validated.
    """

    kind: str
    dim: int
    params: dict
    declared_lip: Optional[float] = None

    @classmethod
    def affine(cls, A, b=None, declared_lip=None, check=True):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise DomainError("affine matrix must be square")
        b = np.zeros(d) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
        if check:
            s = largest_singular_value(A)
            if s > 1 + AFFINE_LIP_SLACK:
                raise DomainError(f"affine map has Lipschitz constant {s:.12g} > 1")
        return cls("affine", d, {"A": A, "b": b}, declared_lip)

    @classmethod
    def identity(cls, dim):
        return cls.affine(np.eye(dim))

    @classmethod
    def scaling(cls, lam, dim):
        return cls.diagonal([lam] * dim)

    @classmethod
    def diagonal(cls, lambdas, declared_lip=None):
        lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if np.any(np.abs(lam) > 1):
            raise DomainError(f"diagonal entries must satisfy |lambda| <= 1, got {lam}")
        return cls("diagonal", len(lam), {"lambdas": lam}, declared_lip)

    @classmethod
    def coordinatewise(cls, components: Sequence, declared_lip=None, check_pairs=256, seed=0):
        comps = [c if isinstance(c, ComponentMap) else ComponentMap.from_dict(c)
                 if isinstance(c, dict) else c for c in components]
        spec = cls("coordinatewise", len(comps), {"components": comps}, declared_lip)
        if check_pairs:
            bad = strong_contraction_violation(spec, pairs=check_pairs, seed=seed)
            if bad > 1e-12:
                raise DomainError(f"component map expands a coordinate by {bad:.3g}")
        return spec

    @classmethod
    def gradient_convex(cls, terms: Sequence, dim: int, declared_lip=None):
        terms = [t if isinstance(t, PotentialTerm) else
                 PotentialTerm(t["type"], {k: v for k, v in t.items() if k != "type"})
                 for t in terms]
        bound = sum(t.hessian_bound() for t in terms)
        if bound > 1 + AFFINE_LIP_SLACK:
            raise DomainError(f"potential Hessian bound {bound:.6g} exceeds 1")
        lip = declared_lip if declared_lip is not None else min(bound, 1.0) or None
        return cls("gradient_convex", dim, {"terms": terms}, lip)

    @classmethod
    def sampled(cls, fn: Callable, dim: int, declared_lip=None):
        return cls("sampled", dim, {"fn": fn}, declared_lip)

    def __call__(self, points):
        return apply_map(self, points)

    def potential(self, points):
        if self.kind != "gradient_convex":
            raise DomainError("only gradient_convex maps carry a potential")
        x = _as_points(points, self.dim)
        return sum(t.value(x) for t in self.params["terms"])

    def compose(self, other: "ContractionSpec") -> "ContractionSpec":
        """``self o other`` for affine/diagonal kinds (stays affine)."""
        A1, b1 = self.linear_part()
        A2, b2 = other.linear_part()
        return ContractionSpec.affine(A1 @ A2, A1 @ b2 + b1, check=False)

    def linear_part(self):
        if self.kind == "affine":
            return self.params["A"], self.params["b"]
        if self.kind == "diagonal":
            return np.diag(self.params["lambdas"]), np.zeros(self.dim)
        raise DomainError(f"{self.kind} map has no linear part")

    @property
    def is_linear_kind(self) -> bool:
        return self.kind in ("affine", "diagonal")

    def to_json(self) -> dict:
        k, p = self.kind, self.params
        if k == "sampled":
            raise DomainError("sampled contractions are ephemeral and cannot be serialized")
        out = {"kind": k, "dim": self.dim}
        if k == "affine":
            out.update(A=p["A"].tolist(), b=p["b"].tolist())
        elif k == "diagonal":
            out.update(lambdas=p["lambdas"].tolist())
        elif k == "coordinatewise":
            if not all(isinstance(c, ComponentMap) for c in p["components"]):
                raise DomainError("coordinatewise maps with callable components are ephemeral")
            out.update(components=[c.to_dict() for c in p["components"]])
        else:
            out.update(terms=[t.to_dict() for t in p["terms"]])
        if self.declared_lip is not None:
            out["declared_lip"] = self.declared_lip
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ContractionSpec":
        kind = d["kind"]
        lip = d.get("declared_lip")
        if kind == "affine":
            return cls.affine(d["A"], d.get("b"), declared_lip=lip)
        if kind == "diagonal":
            return cls.diagonal(d["lambdas"], declared_lip=lip)
        if kind == "coordinatewise":
            return cls.coordinatewise(d["components"], declared_lip=lip)
        if kind == "gradient_convex":
            return cls.gradient_convex(d["terms"], d["dim"], declared_lip=lip)
        raise DomainError(f"cannot deserialize contraction kind {kind!r}")


def _as_points(points, dim):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if dim > 1 or x.size == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DomainError(f"points must have shape (n, {dim}), got {np.shape(points)}")
    return x


def apply_map(T: ContractionSpec, points) -> np.ndarray:
    """Image of an ``(n, dim)`` point array under ``T``."""
    x = _as_points(points, T.dim)
    p = T.params
    if T.kind == "affine":
        return x @ p["A"].T + p["b"]
    if T.kind == "diagonal":
        return x * p["lambdas"]
    if T.kind == "coordinatewise":
        return np.stack([c(x[:, i]) for i, c in enumerate(p["components"])], axis=1)
    if T.kind == "gradient_convex":
        return sum(t.gradient(x) for t in p["terms"])
    y = np.asarray(p["fn"](x), dtype=float)
    if y.shape != x.shape:
        raise DomainError(f"sampled map returned shape {y.shape}, expected {x.shape}")
    return y


# -- Lipschitz constants ------------------------------------------------------

@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    exact: bool
    probes: int = 0

    def __float__(self):
        return self.value


def largest_singular_value(A) -> float:
    """Spectral norm of A (LAPACK SVD via numpy)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


def _probe_pairs(dim, pairs, seed, radius):
    rng = np.random.default_rng([seed, 0x4C1B])
    x = rng.uniform(-radius, radius, size=(pairs, dim))
    y = rng.uniform(-radius, radius, size=(pairs, dim))
    # half the budget on near pairs to probe local derivatives
    near = pairs // 2
    step = rng.normal(size=(near, dim))
    step *= (10.0 ** rng.uniform(-4, -1, size=(near, 1))) / np.linalg.norm(step, axis=1, keepdims=True)
    y[:near] = x[:near] + step
    return x, y


def lipschitz_constant(T: ContractionSpec, probe: int = None, seed: int = 0,
                       radius: float = 4.0) -> LipschitzEstimate:
    """Exact for affine/diagonal maps; a seeded lower-bound estimate otherwise."""
    if T.kind == "affine":
        return LipschitzEstimate(largest_singular_value(T.params["A"]), True)
    if T.kind == "diagonal":
        return LipschitzEstimate(float(np.abs(T.params["lambdas"]).max()), True)
    probe = 4096 if probe is None else probe
    if probe < 2:
        raise DomainError("Lipschitz probing needs a budget of at least 2 pairs")
    x, y = _probe_pairs(T.dim, probe, seed, radius)
    dx = np.linalg.norm(x - y, axis=1)
    ok = dx > 0
    if not ok.any():
        raise EstimationError("every probe pair was degenerate")
    dy = np.linalg.norm(apply_map(T, x[ok]) - apply_map(T, y[ok]), axis=1)
    return LipschitzEstimate(float(np.max(dy / dx[ok])), False, int(ok.sum()))


def lip_for_checks(T: ContractionSpec, probe: int = None, seed: int = 0) -> float:
    """Lipschitz value a theorem check should use: declared when given."""
    if T.declared_lip is not None:
        return float(T.declared_lip)
    if T.kind == "coordinatewise" and all(isinstance(c, ComponentMap) for c in T.params["components"]):
        # a product of 1-D maps is exactly as Lipschitz as its worst component
        return max(c.lip for c in T.params["components"])
    return lipschitz_constant(T, probe, seed).value


def strong_contraction_violation(T: ContractionSpec, pairs: int = 1024, seed: int = 0,
                                 radius: float = 4.0) -> float:
    """Largest ``|T_i(x) - T_i(y)| - |x_i - y_i|`` over seeded probe pairs."""
    x, y = _probe_pairs(T.dim, pairs, seed, radius)
    gap = np.abs(apply_map(T, x) - apply_map(T, y)) - np.abs(x - y)
    return float(gap.max())


# -- pushforward ---------------------------------------------------------------

def _subcell_points(f: DensityGrid, substeps: int):
    h = f.spacing
    flat = f.mass.ravel()
    pos = np.flatnonzero(flat > 0)
    centers = f.spec.cell_centers()[pos]
    ticks = ((np.arange(substeps) + 0.5) / substeps - 0.5) * h
    sub = np.stack([m.ravel() for m in np.meshgrid(*([ticks] * f.dim), indexing="ij")], axis=-1)
    pts = (centers[:, None, :] + sub[None, :, :]).reshape(-1, f.dim)
    w = np.repeat(flat[pos] / substeps**f.dim, len(sub))
    return pts, w


def image_target(T: ContractionSpec, f: DensityGrid, substeps: int = 4, pad: int = 1) -> GridSpec:
    """Grid with f's spacing covering the image of f's support under T."""
    pts, _ = _subcell_points(f, substeps)
    img = apply_map(T, pts)
    h = f.spacing
    return GridSpec.covering(img.min(axis=0) - pad * h, img.max(axis=0) + pad * h, h)


def pushforward_grid(T: ContractionSpec, f: DensityGrid, target: GridSpec = None,
                     substeps: int = 4) -> DensityGrid:
    """Law of T(X) for X ~ f: sub-cell centers are mapped and re-binned."""
    _require_normalized(f)
    if substeps < 1:
        raise DomainError("substeps must be >= 1")
    if target is None:
        target = image_target(T, f, substeps)
    if target.dim != f.dim:
        raise DomainError("target grid dimension differs from source")
    pts, w = _subcell_points(f, substeps)
    img = apply_map(T, pts)
    idx = np.floor((img - target.lower) / target.spacing).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(target.shape)), axis=1)
    lost = math.fsum(w[~inside])
    if lost > COVERAGE_TOL:
        raise CoverageError(f"{lost:.3g} of the mass maps outside the target grid")
    flat = np.ravel_multi_index(tuple(idx[inside].T), target.shape)
    mass = np.bincount(flat, weights=w[inside], minlength=target.n_cells)
    return DensityGrid(target, mass.reshape(target.shape)).normalize()


# -- SVD / polar-diagonal factorization -------------------------------------------

def _complete_basis(U, good):
    """Replace columns of U not flagged ``good`` by an orthonormal completion."""
    n = U.shape[0]
    basis = [U[:, j] for j in range(U.shape[1]) if good[j]]
    fill = []
    for e in np.eye(n):
        if len(basis) + len(fill) == n:
            break
        v = e.copy()
        for b in basis + fill:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            fill.append(v / nv)
    out = U.copy()
    it = iter(fill)
    for j in range(U.shape[1]):
        if not good[j]:
            out[:, j] = next(it)
    return out


def polar_diagonal_factor(A):
    """Write ``A = Q1 @ Lam @ Q2`` with Q1, Q2 orthogonal and Lam >= 0 diagonal.

    One-sided (Hestenes) Jacobi: plane rotations applied on the right until
    every pair of columns of ``A V`` is orthogonal to 1e-12 relative.
    Singular values come out sorted in decreasing order.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or n > 3:
        raise DomainError("polar_diagonal_factor expects a square matrix of size <= 3")
    U = A.copy()
    V = np.eye(n)
    for sweep in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = U[:, p] @ U[:, p]
                beta = U[:, q] @ U[:, q]
                gamma = U[:, p] @ U[:, q]
                if abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta) or gamma == 0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1 + zeta * zeta))
                c = 1 / math.sqrt(1 + t * t)
                s = c * t
                for M in (U, V):
                    mp, mq = M[:, p].copy(), M[:, q].copy()
                    M[:, p] = c * mp - s * mq
                    M[:, q] = s * mp + c * mq
        if not rotated:
            break
    else:
        raise NumericError("Jacobi SVD did not converge",
                           {"sweeps": JACOBI_MAX_SWEEPS, "matrix": A.tolist()})
    sigma = np.linalg.norm(U, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, U, V = sigma[order], U[:, order], V[:, order]
    good = sigma > max(sigma.max(), 1e-300) * n * 1e-15
    Un = np.where(good, U / np.where(good, sigma, 1.0), 0.0)
    Un = _complete_basis(Un, good)
    sigma = np.where(good, sigma, 0.0)
    return Un, np.diag(sigma), V.T
