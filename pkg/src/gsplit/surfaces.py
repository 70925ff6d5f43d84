"""Closed implicit surfaces and the triangular prism used by delete edits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegeneratePrism, ProjectionDiverged


class ImplicitSurface:
    """Level set ``B(x) = 0`` with ``B < 0`` inside and ``B > 0`` outside."""

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def closest_point(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_planes(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals (N, 3) and offsets (N,) of the tangent plane at the foot point of each x."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        p = self.closest_point(x)
        g = self.gradient(p)
        n = g / np.linalg.norm(g, axis=1, keepdims=True)
        return n, -np.einsum("ni,ni->n", n, p)


@dataclass(frozen=True, eq=False)
class Sphere(ImplicitSurface):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def value(self, x):
        r = np.asarray(x, dtype=np.float64) - self.center
        return np.einsum("...i,...i->...", r, r) - self.radius**2

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.center)

    def closest_point(self, x):
        r = np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.center
        norm = np.linalg.norm(r, axis=1, keepdims=True)
        # the center itself has no unique foot point; pick +x
        r = np.where(norm > 0, r, np.array([1.0, 0.0, 0.0]))
        norm = np.where(norm > 0, norm, 1.0)
        return self.center + self.radius * r / norm


@dataclass(frozen=True, eq=False)
class Ellipsoid(ImplicitSurface):
    center: np.ndarray
    semiaxes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "semiaxes", np.asarray(self.semiaxes, dtype=np.float64).reshape(3))
        if not np.all(self.semiaxes > 0):
            raise ValueError("ellipsoid semiaxes must be positive")

    def value(self, x):
        y = (np.asarray(x, dtype=np.float64) - self.center) / self.semiaxes
        return np.einsum("...i,...i->...", y, y) - 1.0

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.center) / self.semiaxes**2

    def closest_point(self, x, iters: int = 200):
        """Exact foot point via the root of the Lagrange secular equation.

        The foot point is ``p_i = a_i^2 y_i / (a_i^2 + t)`` for the unique root
        ``t > -min(a^2)`` of ``sum (a_i y_i / (a_i^2 + t))^2 = 1`` in the
        octant of ``y``; found by safeguarded bisection.
        """
        y = np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.center
        a2 = self.semiaxes**2
        ay = np.abs(y)
        # zero coordinates are nudged so the root bracket stays valid
        ay = np.maximum(ay, 1e-300)

        def f(t):
            return ((self.semiaxes * ay / (a2 + t[:, None])) ** 2).sum(axis=1) - 1.0

        lo = np.full(len(y), -a2.min() * (1.0 - 1e-15))
        hi = np.linalg.norm(self.semiaxes * ay, axis=1) + 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pos = f(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        t = 0.5 * (lo + hi)
        p = a2 * ay / (a2 + t[:, None])
        return self.center + np.sign(np.where(y == 0, 1.0, y)) * p


@dataclass(frozen=True, eq=False)
class Generic(ImplicitSurface):
    """User surface given by vectorized callables ``B(x)`` and ``grad B(x)`` on (N, 3) arrays.

    The foot point is approximated by Newton steps along the gradient,
    ``x <- x - B(x) grad B / |grad B|^2``, which lands on the surface near the
    true closest point when x is close to it.
    """

    func: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    max_steps: int = 50
    tol: float = 1e-9

    def value(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=np.float64)))

    def gradient(self, x):
        return np.asarray(self.grad(np.asarray(x, dtype=np.float64)))

    def closest_point(self, x):
        p = np.atleast_2d(np.asarray(x, dtype=np.float64)).copy()
        for _ in range(self.max_steps):
            b = self.value(p)
            if np.all(np.abs(b) <= self.tol):
                return p
            g = self.gradient(p)
            g2 = np.einsum("ni,ni->n", g, g)
            if not np.all(np.isfinite(b)) or np.any(g2 == 0):
                break
            p = p - (b / g2)[:, None] * g
        b = self.value(p)
        if np.all(np.abs(b) <= self.tol):
            return p
        raise ProjectionDiverged(f"surface projection did not converge (max |B| = {np.nanmax(np.abs(b)):.3e})")


@dataclass(frozen=True, eq=False)
class Prism:
    """Triangle extruded along ``axis`` by ``extent``."""

    vertices: np.ndarray
    axis: np.ndarray
    extent: float
    faces: list = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(3, 3)
        ax = np.asarray(self.axis, dtype=np.float64).reshape(3)
        ax = ax / np.linalg.norm(ax)
        tri_n = np.cross(v[1] - v[0], v[2] - v[0])
        area2 = np.linalg.norm(tri_n)
        if area2 <= 1e-12 * max(np.abs(v).max(), 1.0) ** 2:
            raise DegeneratePrism("prism base triangle has zero area")
        if not self.extent > 0 or abs(ax @ tri_n) <= 1e-9 * area2:
            raise DegeneratePrism("prism extrusion must be positive and not parallel to its base")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "axis", ax)
        top = v + ax * self.extent
        centroid = (v.sum(0) + top.sum(0)) / 6.0
        polys = [v, top[::-1]] + [np.array([v[i], v[(i + 1) % 3], top[(i + 1) % 3], top[i]]) for i in range(3)]
        faces = []
        for poly in polys:
            n = np.cross(poly[1] - poly[0], poly[2] - poly[0])
            n /= np.linalg.norm(n)
            d = -n @ poly[0]
            if n @ centroid + d > 0:
                n, d = -n, -d
            faces.append((n, d, poly))
        object.__setattr__(self, "faces", faces)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inside = np.ones(len(x), dtype=bool)
        for n, d, _ in self.faces:
            inside &= x @ n + d < 0
        return inside


def point_segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each x (N, 3) to segment ab and the closest segment point."""
    ab = b - a
    t = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
    c = a + t[:, None] * ab
    return np.linalg.norm(x - c, axis=1), c


def in_polygon(x: np.ndarray, poly: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Whether the projection of x onto the plane of a convex polygon falls inside it."""
    k = len(poly)
    # orientation-agnostic: all edge tests must share a sign
    signs = []
    for i in range(k):
        e = poly[(i + 1) % k] - poly[i]
        signs.append(np.cross(e, x - poly[i]) @ normal)
    s = np.stack(signs)
    return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)
