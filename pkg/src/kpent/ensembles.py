"""Random contraction generators used by sweeps and falsification runs.

These ensembles are an engineering choice, not canonical test sets:

* affine: ``Q1 diag(s) Q2 + b`` with Haar-random rotations and s in [lo, hi];
* diagonal: entries uniform in [-1, 1];
* coordinatewise: each coordinate gets a random 1-Lipschitz component map
  (soft clamp, blend, clip, fold or linear);
* gradient_convex: a quadratic with Hessian <= 1/2 plus a log-cosh ridge
  (weight 1/2) or a Huber term, so the Hessian stays <= 1;
* sampled: radial soft clamps, projections onto disks, rotations and affine
  contractions, composed at random.  These are probe-validated before use.
"""

from __future__ import annotations

import math

import numpy as np

from .contract import ComponentMap, ContractionSpec, PotentialTerm, lipschitz_constant
from .errors import EstimationError

PROBE_SLACK = 1e-9


def random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Q * np.sign(np.diag(R))


def random_affine(rng, dim, lo=0.0, hi=1.0, shift=1.0) -> ContractionSpec:
    s = rng.uniform(lo, hi, dim)
    A = random_rotation(rng, dim) @ np.diag(s) @ random_rotation(rng, dim)
    b = rng.uniform(-shift, shift, dim)
    # rounding can push the top singular value a few ulps past max(s)
    return ContractionSpec.affine(A, b, declared_lip=float(s.max()) if s.max() > 0 else None)


def random_diagonal(rng, dim) -> ContractionSpec:
    return ContractionSpec.diagonal(rng.uniform(-1, 1, dim))


def random_component(rng) -> ComponentMap:
    kind = rng.integers(5)
    if kind == 0:
        return ComponentMap("softclamp", {"c": float(rng.uniform(0.5, 2)), "m": float(rng.uniform(-0.5, 0.5)),
                                          "b": float(rng.uniform(-0.5, 0.5))})
    if kind == 1:
        return ComponentMap("blend", {"s": float(rng.uniform(0, 1)), "c": float(rng.uniform(0.5, 2)),
                                      "b": float(rng.uniform(-0.5, 0.5))})
    if kind == 2:
        lo = float(rng.uniform(-2.5, -0.5))
        return ComponentMap("clip", {"lo": lo, "hi": lo + float(rng.uniform(1, 3))})
    if kind == 3:
        return ComponentMap("fold", {"m": float(rng.uniform(-0.5, 0.5)), "b": float(rng.uniform(-0.5, 0.5))})
    return ComponentMap("linear", {"a": float(rng.uniform(-1, 1)), "b": float(rng.uniform(-0.5, 0.5))})


def random_coordinatewise(rng, dim) -> ContractionSpec:
    return ContractionSpec.coordinatewise([random_component(rng) for _ in range(dim)])


def random_gradient_convex(rng, dim) -> ContractionSpec:
    Q = random_rotation(rng, dim)
    P = Q @ np.diag(rng.uniform(0, 0.5, dim)) @ Q.T
    terms = [PotentialTerm("quadratic", {"P": 0.5 * (P + P.T)})]
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    if rng.random() < 0.5:
        terms.append(PotentialTerm("logcosh", {"u": u, "c": float(rng.uniform(0.5, 2)), "w": 0.5}))
    else:
        terms.append(PotentialTerm("huber", {"c": float(rng.uniform(0.5, 2)), "w": 0.5,
                                             "z": rng.uniform(-0.5, 0.5, dim)}))
    return ContractionSpec.gradient_convex(terms, dim)


def _radial_softclamp(c):
    def fn(x):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        scale = np.where(r > 0, c * np.tanh(r / c) / np.where(r > 0, r, 1.0), 1.0)
        return x * scale
    return fn


def _disk_projection(center, rho):
    def fn(x):
        dev = x - center
        r = np.linalg.norm(dev, axis=1, keepdims=True)
        return center + dev * np.minimum(1.0, rho / np.maximum(r, 1e-300))
    return fn


def _affine_fn(A, b):
    return lambda x: x @ A.T + b


def random_sampled(rng, dim, pieces=2, probe=4096, seed=0) -> ContractionSpec:
    """Composition of random 1-Lipschitz pieces, probe-validated."""
    fns, names = [], []
    for _ in range(pieces):
        kind = rng.integers(4)
        if kind == 0:
            c = float(rng.uniform(0.5, 2))
            fns.append(_radial_softclamp(c))
            names.append(f"radial_softclamp(c={c:.3f})")
        elif kind == 1:
            center, rho = rng.uniform(-0.5, 0.5, dim), float(rng.uniform(0.5, 2))
            fns.append(_disk_projection(center, rho))
            names.append(f"ball_projection(rho={rho:.3f})")
        elif kind == 2:
            fns.append(_affine_fn(random_rotation(rng, dim), rng.uniform(-0.5, 0.5, dim)))
            names.append("rigid_motion")
        else:
            T = random_affine(rng, dim, 0.3, 1.0, 0.5)
            fns.append(_affine_fn(T.params["A"], T.params["b"]))
            names.append("affine")

    def composed(x):
        for fn in fns:
            x = fn(x)
        return x

    T = ContractionSpec.sampled(composed, dim)
    lip = lipschitz_constant(T, probe=probe, seed=seed)
    if lip.value > 1 + PROBE_SLACK:
        raise EstimationError(f"sampled map failed its Lipschitz probe ({lip.value:.6g})")
    object.__setattr__(T, "params", dict(T.params, description=" o ".join(reversed(names)),
                                         probe=lip.probes, probe_lip=lip.value))
    return T


def random_contraction(rng, dim, kind: str) -> ContractionSpec:
    makers = {
        "affine": random_affine,
        "diagonal": random_diagonal,
        "coordinatewise": random_coordinatewise,
        "gradient_convex": random_gradient_convex,
        "sampled": random_sampled,
    }
    return makers[kind](rng, dim)


def describe(T: ContractionSpec) -> dict:
    """JSON-friendly description (sampled maps are summarized, not serialized)."""
    if T.kind == "sampled":
        return {"kind": "sampled", "dim": T.dim, "description": T.params.get("description", "<callable>"),
                "probe_lip": T.params.get("probe_lip", math.nan)}
    return T.to_json()
