"""Convex polygons: shadow systems, intrinsic volumes and Minkowski sums with disks."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

DEGENERATE_AREA = 1e-10


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertices.

    Near-collinear consecutive vertices (triangle area below 1e-10) are
    rejected rather than silently dropped.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise DomainError("a polygon needs at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(v)):
            raise DomainError("polygon vertices must be finite")
        if signed_area(v) <= 0:
            raise DomainError("polygon vertices must be in counterclockwise order")
        turns = 0.5 * _cross(v, np.roll(v, -1, axis=0), np.roll(v, -2, axis=0))
        if np.any(turns <= DEGENERATE_AREA):
            raise DomainError("polygon is not strictly convex (collinear or reflex vertex)")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __setattr__(self, name, value):
        raise AttributeError("ConvexPolygon is immutable")

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"

    @classmethod
    def hull(cls, points) -> "ConvexPolygon":
        """Convex hull (Andrew's monotone chain), collinear points dropped."""
        pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
        if len(pts) < 3:
            raise DomainError("hull needs at least 3 distinct points")

        def chain(seq):
            out = []
            for p in seq:
                while len(out) >= 2 and _cross(np.array(out[-2]), np.array(out[-1]), np.array(p)) <= 0:
                    out.pop()
                out.append(p)
            return out

        lower, upper = chain(pts), chain(reversed(pts))
        return cls(lower[:-1] + upper[:-1])

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def perimeter(self) -> float:
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        return math.fsum(np.hypot(edges[:, 0], edges[:, 1]))

    def canonical(self) -> np.ndarray:
        """Vertices rotated to start at the lexicographically smallest one."""
        v = self.vertices
        start = min(range(len(v)), key=lambda i: (v[i, 0], v[i, 1]))
        return np.roll(v, -start, axis=0)

    def transformed(self, A, b=None) -> "ConvexPolygon":
        A = np.asarray(A, dtype=float)
        img = self.vertices @ A.T + (0 if b is None else np.asarray(b, dtype=float))
        if np.linalg.det(A) < 0:
            img = img[::-1]
        return ConvexPolygon(_clean_ring(img))

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        cr = _cross(a[None, :, :], b[None, :, :], p[:, None, :])
        return np.all(cr >= 0, axis=1)

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the polygon (0 inside)."""
        p = np.asarray(points, dtype=float)
        a = self.vertices[None, :, :]
        e = np.roll(self.vertices, -1, axis=0)[None, :, :] - a
        t = np.clip(np.sum((p[:, None, :] - a) * e, axis=2) / np.sum(e * e, axis=2), 0.0, 1.0)
        nearest = a + t[:, :, None] * e
        d = np.min(np.linalg.norm(p[:, None, :] - nearest, axis=2), axis=1)
        return np.where(self.contains(p), 0.0, d)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _clean_ring(points, rel_tol=1e-12) -> np.ndarray:
    """Drop repeated and collinear points from a closed ring of vertices."""
    pts = [np.asarray(p, dtype=float) for p in points]
    scale = max(1.0, float(np.ptp(np.asarray(pts), axis=0).max()))
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for i in range(len(pts)):
            o, a, b = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            if np.linalg.norm(a - o) <= rel_tol * scale or abs(_cross(o, a, b)) <= rel_tol * scale * scale:
                del pts[i]
                changed = True
                break
    return np.asarray(pts)


def _chord(vertices, axis, x):
    """Extent [t1, t2] of the polygon along ``axis`` at transverse coordinate x."""
    other = 1 - axis
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    vals = []
    for p, q in zip(a, b):
        xp, xq = p[other], q[other]
        lo, hi = min(xp, xq), max(xp, xq)
        if x < lo or x > hi:
            continue
        if xp == xq:
            vals.extend([p[axis], q[axis]])
        else:
            s = (x - xp) / (xq - xp)
            vals.append(p[axis] + s * (q[axis] - p[axis]))
    return min(vals), max(vals)


def shadow_system(K: ConvexPolygon, axis: int, lam: float) -> ConvexPolygon:
    """Member ``lam`` of the shadow system of K along coordinate ``axis``.

    Each chord [t1, t2] parallel to the axis is recentred at
    ``lam * (t1 + t2) / 2`` keeping its length, so area is preserved;
    ``lam = 1`` returns K and ``lam = -1`` its reflection.
    """
    if axis not in (0, 1):
        raise DomainError("axis must be 0 or 1")
    if not -1 <= lam <= 1:
        raise DomainError("lambda must lie in [-1, 1]")
    if not isinstance(K, ConvexPolygon):
        raise DomainError("shadow_system needs a ConvexPolygon")
    other = 1 - axis
    xs = np.unique(K.vertices[:, other])
    lower, upper = [], []
    for x in xs:
        t1, t2 = _chord(K.vertices, axis, x)
        lo = 0.5 * ((1 + lam) * t1 + (lam - 1) * t2)
        hi = 0.5 * ((1 + lam) * t2 + (lam - 1) * t1)
        lower.append((x, lo))
        upper.append((x, hi))
    # (transverse, along) coordinates; lower chain left to right, upper back
    ring = lower + [p for p in reversed(upper)]
    ring = np.array([(p[1], p[0]) if axis == 0 else (p[0], p[1]) for p in ring])
    if signed_area(ring) < 0:
        ring = ring[::-1]
    return ConvexPolygon(_clean_ring(ring))


def intrinsic_volumes_2d(K: ConvexPolygon):
    """(V0, V1, V2) = (1, perimeter / 2, area)."""
    return 1.0, K.perimeter / 2, K.area


def parallel_body_area(K: ConvexPolygon, r: float) -> float:
    """Area of K + rB by the planar Steiner formula."""
    return K.area + K.perimeter * r + math.pi * r * r
