"""Gaussian entropy algebra and entropy-power checks with Gaussian noise.

Gaussian inputs are handled entirely in closed form (log-determinants), so
those checks carry only a floating-point budget.  Grid inputs go through the
pushforward / convolution pipeline and carry the calibrated discretization
budget, converted from nats to entropy-power units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from . import budget
from .ballgeom import MCParams
from .contract import ContractionSpec, apply_map, lip_for_checks
from .convolve import convolve
from .errors import DegenerateError, DomainError, PreconditionError
from .families import Distribution, is_log_concave_1d
from .grid import DensityGrid, covariance, renyi_entropy
from .pipeline import as_grid, relative_spacing, resolve_spacing, sum_pair
from .report import FLOAT_BUDGET, CheckReport, Timer
from .rng import chunk_generator, map_chunks, stream_id

TWO_PI_E = 2 * math.pi * math.e
SYMMETRY_TOL = 1e-12
SINGULAR_DET = 1e-300
COMMUTE_TOL = 1e-10
ISOTROPY_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """N(mean, cov) with a symmetric positive semidefinite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = cov.shape[0]
        mean = np.zeros(d) if self.mean is None else np.atleast_1d(np.asarray(self.mean, dtype=float))
        if cov.shape != (d, d) or mean.shape != (d,):
            raise DomainError("mean must have length d and cov shape (d, d)")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise DomainError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov).min() < -SYMMETRY_TOL * max(1.0, np.abs(cov).max()):
            raise DomainError("covariance must be positive semidefinite")
        for a in (mean, cov):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def standard(cls, dim: int) -> "GaussianLaw":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    @property
    def degenerate(self) -> bool:
        return np.linalg.det(self.cov) <= SINGULAR_DET

    def affine_image(self, A, b=None) -> "GaussianLaw":
        A = np.atleast_2d(A)
        b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=float)
        return GaussianLaw(A @ self.mean + b, A @ self.cov @ A.T)

    def plus(self, other: "GaussianLaw") -> "GaussianLaw":
        """Law of the sum of independent copies."""
        return GaussianLaw(self.mean + other.mean, self.cov + other.cov)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, d) -> "GaussianLaw":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(d.get("mean"), d["cov"])


def gaussian_entropy(g: GaussianLaw) -> float:
    """Differential entropy in nats; -inf for a singular covariance."""
    det = np.linalg.det(g.cov)
    if det <= SINGULAR_DET:
        return -math.inf
    sign, logdet = np.linalg.slogdet(g.cov)
    return 0.5 * logdet + 0.5 * g.dim * math.log(TWO_PI_E)


def gaussian_entropy_power(g: GaussianLaw) -> float:
    """N = 2 pi e det(cov)^(1/d), 0 for singular covariances."""
    h = gaussian_entropy(g)
    return 0.0 if h == -math.inf else math.exp(2 * h / g.dim)


def _det_root(M) -> float:
    M = np.atleast_2d(M)
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        return 0.0
    return math.exp(logdet / M.shape[0])


def _psd_sqrt(S):
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def _psd_project(S):
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.clip(w, 0, None)) @ V.T


# -- Δ(X) and L_X --------------------------------------------------------------------------

def _grid_cov(f: DensityGrid) -> np.ndarray:
    cov = covariance(f).cov
    if np.linalg.det(cov) <= SINGULAR_DET:
        raise DegenerateError("grid density has a singular covariance")
    return cov


def delta_gap(f: DensityGrid) -> float:
    """(h(Z_X) - h(X)) / d with Z_X the Gaussian of matching covariance."""
    cov = _grid_cov(f)
    return (gaussian_entropy(GaussianLaw(np.zeros(f.dim), cov)) - renyi_entropy(f, 1.0)) / f.dim


def isotropic_constant(f: DensityGrid) -> float:
    """(max density)^(1/d) * det(cov)^(1/(2d))."""
    cov = _grid_cov(f)
    peak = float(f.density.max())
    return peak ** (1 / f.dim) * np.linalg.det(cov) ** (1 / (2 * f.dim))


def isotropic_threshold(L: float) -> float:
    """Largest Lipschitz constant sqrt(e / (2 pi L^2)) covered by the corollary."""
    return math.sqrt(math.e / (2 * math.pi * L * L))


def _power_budget(N: float, eps_nats: float, dim: int) -> float:
    """Entropy-power error implied by an entropy error of eps_nats."""
    return N * math.expm1(2 * eps_nats / dim)


def _float_budget(*values) -> float:
    return max(FLOAT_BUDGET, 1e-12 * max(abs(v) for v in values))


def _law_dim(X) -> int:
    return X.dim


def _gaussian_input(X):
    if isinstance(X, GaussianLaw):
        return X
    if isinstance(X, Distribution) and X.family == "gaussian":
        return GaussianLaw(X.params["mean"], X.params["cov"])
    return None


def _noise(dim) -> Distribution:
    return Distribution.gaussian(np.zeros(dim), np.eye(dim))


# -- vector EPI ------------------------------------------------------------------------------

def check_vector_epi(X, S, Sigma=None, cells: int = None,
                     theorem_id: str = "T3.1-vector-epi") -> CheckReport:
    """N(X + S^(1/2) Z) >= det(I - S)^(1/d) N(X) + det(S)^(1/d) N(X + Z), Z ~ N(0, Sigma)."""
    d = _law_dim(X)
    S = np.atleast_2d(np.asarray(S, dtype=float))
    Sigma = np.eye(d) if Sigma is None else np.atleast_2d(np.asarray(Sigma, dtype=float))
    I = np.eye(d)
    for M, name in ((S, "S"), (I - S, "I - S"), (Sigma, "Sigma")):
        if np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -1e-12:
            raise PreconditionError(f"{name} must be positive semidefinite")
    if np.abs(S @ Sigma - Sigma @ S).max() > COMMUTE_TOL:
        raise PreconditionError("S must commute with Sigma")
    cS, cIS = _det_root(S), _det_root(I - S)
    root = _psd_sqrt(S)
    noise_cov = root @ Sigma @ root
    with Timer() as tm:
        G = _gaussian_input(X)
        if G is not None:
            n_mix = gaussian_entropy_power(G.plus(GaussianLaw(None, noise_cov)))
            n_x = gaussian_entropy_power(G)
            n_xz = gaussian_entropy_power(G.plus(GaussianLaw(None, Sigma)))
            lhs, rhs = n_mix, cIS * n_x + cS * n_xz
            report = dict(float_budget=_float_budget(lhs, rhs), provenance=("closed-form", "closed-form"))
        else:
            if d > 2:
                raise DomainError("grid path supports d <= 2")
            Z = Distribution.gaussian(np.zeros(d), Sigma)
            h = resolve_spacing([X, Z], cells)
            fx = as_grid(X, h)
            n_x = math.exp(2 * renyi_entropy(fx, 1) / d)
            n_xz = math.exp(2 * renyi_entropy(convolve(fx, Z.grid(h)), 1) / d)
            if np.allclose(noise_cov, 0):
                fmix = fx
            elif np.linalg.det(noise_cov) <= SINGULAR_DET:
                raise DomainError("grid path needs S^(1/2) Sigma S^(1/2) to be zero or nonsingular")
            else:
                fmix = convolve(fx, Distribution.gaussian(np.zeros(d), noise_cov).grid(h))
            n_mix = math.exp(2 * renyi_entropy(fmix, 1) / d)
            eps = budget.entropy_budget(d, relative_spacing([X, Z], h))
            lhs, rhs = n_mix, cIS * n_x + cS * n_xz
            grid_b = (_power_budget(n_mix, eps, d) + cIS * _power_budget(n_x, eps, d)
                      + cS * _power_budget(n_xz, eps, d))
            report = dict(grid_budget=grid_b, provenance=("grid", "grid"))
    return CheckReport.build(theorem_id, lhs, rhs, sense="ge", d=d, runtime_ms=tm.ms,
                             params={"S": S.tolist(), "Sigma": Sigma.tolist()},
                             details={"N_X": n_x, "N_X_plus_Z": n_xz}, **report)


# -- linear contraction EPI ---------------------------------------------------------------

def _linear_epi_closed(G: GaussianLaw, A, lip):
    d = G.dim
    n_xz = gaussian_entropy_power(G.plus(GaussianLaw.standard(d)))
    n_txz = gaussian_entropy_power(G.affine_image(A).plus(GaussianLaw.standard(d)))
    n_x = gaussian_entropy_power(G)
    return n_xz, n_txz, n_x


def check_linear_epi(X, T: ContractionSpec, cells: int = None,
                     theorem_id: str = "T3.2-linear-epi") -> CheckReport:
    """N(X + Z) >= N(T(X) + Z) + (1 - Lip(T)^2) N(X) for affine T, Z standard."""
    if not T.is_linear_kind:
        raise PreconditionError("check_linear_epi needs an affine or diagonal contraction")
    A, b = T.linear_part()
    lip = lip_for_checks(T)
    if lip > 1 + 1e-12:
        raise PreconditionError(f"T is not a contraction (Lip = {lip:.12g})")
    d = T.dim
    with Timer() as tm:
        G = _gaussian_input(X)
        if G is not None:
            n_xz, n_txz, n_x = _linear_epi_closed(G, A, lip)
            extra = dict(float_budget=_float_budget(n_xz, n_txz, n_x), provenance=("closed-form", "closed-form"))
        else:
            if d > 2:
                raise DomainError("grid path supports d <= 2")
            pair = sum_pair(X, _noise(d), T, cells)
            n_xz = math.exp(2 * renyi_entropy(pair.plain, 1) / d)
            n_txz = math.exp(2 * renyi_entropy(pair.mapped, 1) / d)
            n_x = math.exp(2 * renyi_entropy(as_grid(X, pair.spacing), 1) / d)
            eps = budget.entropy_budget(d, pair.rel_spacing)
            gb = (_power_budget(n_xz, eps, d) + _power_budget(n_txz, eps, d)
                  + abs(1 - lip * lip) * _power_budget(n_x, eps, d))
            extra = dict(grid_budget=gb, provenance=("grid", "grid"))
    lhs, rhs = n_xz, n_txz + (1 - lip * lip) * n_x
    return CheckReport.build(theorem_id, lhs, rhs, sense="ge", d=d, runtime_ms=tm.ms,
                             params={"lip": lip, "T": T.to_json()},
                             details={"N_TX_plus_Z": n_txz, "N_X": n_x}, **extra)


def regularized_path(T: ContractionSpec, eps: float) -> ContractionSpec:
    """T_eps = (1 - eps) T + eps I (positive definite approximations of singular T)."""
    A, b = T.linear_part()
    return ContractionSpec.affine((1 - eps) * A + eps * np.eye(T.dim), (1 - eps) * b)


# -- Gaussian input, strong contraction -------------------------------------------------------

def _strong_or_isotropic(T: ContractionSpec, lam: np.ndarray):
    isotropic = np.allclose(lam, lam[0])
    strong = T.kind in ("coordinatewise", "diagonal")
    if not (strong or isotropic):
        raise PreconditionError("a non-isotropic covariance needs a strong (coordinatewise or diagonal) contraction")
    return isotropic


def check_gaussian_strong(Lam, T: ContractionSpec, mc: MCParams = MCParams(), mean=None,
                          report_entropy: bool = False,
                          theorem_id: str = "T3.3-gaussian-strong") -> CheckReport:
    """N(G + Z) >= 2 pi e det(I + Cov T(G))^(1/d) + (1 - Lip^2) N(G), G ~ N(mean, Lam).

    The middle term bounds N(T(G) + Z) from above (Gaussian maximum entropy),
    so this is the stronger, proof-route statement.  Cov T(G) is estimated by
    Monte Carlo with a delta-method standard error.
    """
    lam = np.atleast_1d(np.diag(np.atleast_2d(Lam)) if np.ndim(Lam) == 2 else np.asarray(Lam, dtype=float))
    if np.ndim(Lam) == 2 and np.abs(np.atleast_2d(Lam) - np.diag(lam)).max() > 0:
        raise PreconditionError("Lambda must be diagonal")
    if np.any(lam < 0):
        raise DomainError("Lambda must be positive semidefinite")
    d = len(lam)
    if T.dim != d:
        raise DomainError("T and Lambda dimensions differ")
    isotropic = _strong_or_isotropic(T, lam)
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    lip = lip_for_checks(T)
    sid = stream_id("gauss.strong")
    sd = np.sqrt(lam)

    def draw(c, size):
        g = mu + chunk_generator(mc.seed, sid, c).standard_normal((size, d)) * sd
        return apply_map(T, g)

    with Timer() as tm:
        y = np.concatenate(map_chunks(draw, mc.samples, mc.workers))
        ybar = y.mean(axis=0)
        dev = y - ybar
        Sig = _psd_project(dev.T @ dev / (len(y) - 1))
        M = np.eye(d) + Sig
        bound = TWO_PI_E * _det_root(M)
        q = np.einsum("ni,ij,nj->n", dev, np.linalg.inv(M), dev)
        se = bound / d * float(np.std(q, ddof=1)) / math.sqrt(len(y))
        n_gz = TWO_PI_E * float(np.prod(1 + lam)) ** (1 / d)
        n_g = TWO_PI_E * float(np.prod(lam)) ** (1 / d)
        details = {"cov_TG": Sig.tolist(), "bound_N_TG_plus_Z": bound, "isotropic": bool(isotropic)}
        if report_entropy and d <= 2 and np.all(lam > 0):
            G = Distribution.gaussian(mu, np.diag(lam))
            pair = sum_pair(G, _noise(d), T)
            details["grid_N_TG_plus_Z"] = math.exp(2 * renyi_entropy(pair.mapped, 1) / d)
    return CheckReport.build(theorem_id, n_gz, bound + (1 - lip * lip) * n_g, sense="ge",
                             mc_stderrs=(se,), provenance=("closed-form", "mc"), seed=mc.seed,
                             samples=mc.samples, d=d, runtime_ms=tm.ms,
                             params={"Lambda": lam.tolist(), "lip": lip}, details=details)


# -- isotropic log-concave X ----------------------------------------------------------------------

def _require_isotropic_log_concave(X, f: DensityGrid):
    if isinstance(X, Distribution) and not X.log_concave:
        raise PreconditionError("X must be log-concave")
    if f.dim == 1 and not is_log_concave_1d(f):
        raise PreconditionError("X grid fails the 1-D log-concavity test")
    cov = covariance(f).cov
    a = np.trace(cov) / f.dim
    if np.abs(cov - a * np.eye(f.dim)).max() > ISOTROPY_TOL * a:
        raise PreconditionError("X must be isotropic (covariance proportional to the identity)")
    return cov


def check_isotropic_lc(X, T: ContractionSpec, cells: int = None,
                       theorem_id: str = "T3.4-isotropic-lc") -> CheckReport:
    """N(X + Z) >= N(T(X) + Z) + (1 - (e^Δ Lip)^2) N(X) for isotropic log-concave X.

    Uses e^{2Δ} N(X) = 2 pi e det(Σ_X)^(1/d), which removes Δ's own grid error
    from the additive term.
    """
    d = T.dim
    if d > 2:
        raise DomainError("grid path supports d <= 2")
    lip = lip_for_checks(T)
    with Timer() as tm:
        pair = sum_pair(X, _noise(d), T, cells)
        fx = as_grid(X, pair.spacing)
        cov = _require_isotropic_log_concave(X, fx)
        delta = delta_gap(fx)
        n_xz = math.exp(2 * renyi_entropy(pair.plain, 1) / d)
        n_txz = math.exp(2 * renyi_entropy(pair.mapped, 1) / d)
        n_x = math.exp(2 * renyi_entropy(fx, 1) / d)
        gauss_n = TWO_PI_E * _det_root(cov)
        rhs = n_txz + n_x - lip * lip * gauss_n
        eps = budget.entropy_budget(d, pair.rel_spacing)
        gb = _power_budget(n_xz, eps, d) + _power_budget(n_txz, eps, d) + _power_budget(n_x, eps, d)
    return CheckReport.build(
        theorem_id, n_xz, rhs, sense="ge", grid_budget=gb, provenance=("grid", "grid"), d=d,
        runtime_ms=tm.ms, params={"lip": lip},
        details={"delta": delta, "meaningful": math.exp(delta) * lip <= 1,
                 "proof_bound_N_TX_plus_Z": TWO_PI_E * (1 + np.trace(cov) / d * lip * lip)},
    )


def check_isotropic_threshold(X, T: ContractionSpec, cells: int = None,
                              theorem_id: str = "C3.1-isotropic-threshold") -> CheckReport:
    """h(T(X) + Z) <= h(X + Z) when Lip(T) <= sqrt(e / (2 pi L_X^2))."""
    d = T.dim
    lip = lip_for_checks(T)
    with Timer() as tm:
        pair = sum_pair(X, _noise(d), T, cells)
        fx = as_grid(X, pair.spacing)
        _require_isotropic_log_concave(X, fx)
        L = isotropic_constant(fx)
        limit = isotropic_threshold(L)
        if lip > limit:
            raise PreconditionError(f"Lip(T) = {lip:.6g} exceeds the threshold {limit:.6g}")
        lhs, rhs = renyi_entropy(pair.mapped, 1), renyi_entropy(pair.plain, 1)
        eps = budget.entropy_budget(d, pair.rel_spacing)
    return CheckReport.build(theorem_id, lhs, rhs, sense="le", grid_budget=2 * eps,
                             provenance=("grid", "grid"), d=d, runtime_ms=tm.ms,
                             params={"lip": lip}, details={"L_X": L, "threshold": limit})


def check_delta_lx(f: DensityGrid, rel_spacing: float = None,
                   theorem_id: str = "D3.1-delta-LX") -> CheckReport:
    """log(sqrt(2 pi / e) L_X) <= Δ(X) for log-concave X.

    Both sides share the covariance; the difference is 1 - (h - h_inf)/d, so
    the grid budget covers the two entropies h and h_inf.
    """
    with Timer() as tm:
        delta = delta_gap(f)
        L = isotropic_constant(f)
        lhs = math.log(math.sqrt(2 * math.pi / math.e) * L)
    gb = 0.0
    if rel_spacing is not None:
        gb = 2 * budget.entropy_budget(f.dim, rel_spacing) / f.dim
    return CheckReport.build(theorem_id, lhs, delta, sense="le", grid_budget=gb,
                             float_budget=FLOAT_BUDGET, provenance=("grid", "grid"), d=f.dim,
                             runtime_ms=tm.ms, details={"L_X": L})


# -- the open strengthened question ------------------------------------------------------------

@dataclass
class StressSummary:
    trials: int
    reports: List[CheckReport] = field(default_factory=list)
    flagged: List[dict] = field(default_factory=list)

    @property
    def margins(self) -> List[float]:
        return [r.margin for r in self.reports]


def open_question_check(X, T: ContractionSpec, cells: int = None,
                        theorem_id: str = "Q3.1-open-strengthened") -> CheckReport:
    """N(X + Z) >= N(T(X) + Z) + (1 - Lip^2) N(X) for any contraction T (not a theorem)."""
    d = T.dim
    lip = lip_for_checks(T)
    G = _gaussian_input(X)
    if G is not None and T.is_linear_kind:
        r = check_linear_epi(G, T, theorem_id=theorem_id)
        return r
    with Timer() as tm:
        pair = sum_pair(X, _noise(d), T, cells)
        n_xz = math.exp(2 * renyi_entropy(pair.plain, 1) / d)
        n_txz = math.exp(2 * renyi_entropy(pair.mapped, 1) / d)
        n_x = math.exp(2 * renyi_entropy(as_grid(X, pair.spacing), 1) / d)
        eps = budget.entropy_budget(d, pair.rel_spacing)
        gb = (_power_budget(n_xz, eps, d) + _power_budget(n_txz, eps, d)
              + abs(1 - lip * lip) * _power_budget(n_x, eps, d))
    return CheckReport.build(theorem_id, n_xz, n_txz + (1 - lip * lip) * n_x, sense="ge",
                             grid_budget=gb, provenance=("grid", "grid"), d=d, runtime_ms=tm.ms,
                             params={"lip": lip})


def stress_open_question(X, make_T: Callable, trials: int, seed: int = 0,
                         cells: int = None) -> StressSummary:
    """Run the strengthened inequality on randomized (X, T) pairs.

    ``X`` is a law or a callable ``rng -> law``; ``make_T`` is ``rng -> T``.
    Margins below -5 x tolerance are recorded as falsification candidates with
    a reproduction bundle; they are reported, never raised.
    """
    from .ensembles import describe
    from .rng import instance_rng

    if trials < 1:
        raise DomainError("trials must be >= 1")
    summary = StressSummary(trials)
    for i in range(trials):
        rng = instance_rng(seed, "open-question", i)
        law = X(rng) if callable(X) else X
        T = make_T(rng)
        r = open_question_check(law, T, cells)
        r.seed = seed
        r.params["trial"] = i
        summary.reports.append(r)
        if r.flagged:
            summary.flagged.append({"trial": i, "seed": seed, "margin": r.margin,
                                    "tolerance": r.tolerance, "T": describe(T),
                                    "X": law.to_json() if hasattr(law, "to_json") else repr(law)})
    return summary
