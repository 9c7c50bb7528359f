"""Quadrature rules on edges, triangles, and polygons.

Polygon rules fan-triangulate from the centroid (ear clipping as a
fallback) and place a collapsed tensor Gauss rule on each triangle, so the
declared exactness degree is met with positive weights. A graded variant
concentrates points toward a singular vertex for non-polynomial integrands.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from . import geometry


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (n, 2) for area rules, (n,) parameters not stored for edges
    weights: np.ndarray  # (n,)
    exactness: int

    def integrate(self, f) -> float:
        vals = f(self.points)
        return float(np.dot(self.weights, vals))


@lru_cache(maxsize=None)
def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1, 1]; exact to degree 2n - 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def gauss_lobatto_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes/weights on [-1, 1]; exact to degree 2n - 3."""
    if n < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    if n == 2:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    # interior nodes are the roots of P'_{n-1} = c * Jacobi(1,1)_{n-2}
    xi, _ = roots_jacobi(n - 2, 1.0, 1.0)
    x = np.concatenate(([-1.0], np.sort(xi), [1.0]))
    pnm1 = np.polynomial.legendre.Legendre.basis(n - 1)(x)
    w = 2.0 / (n * (n - 1) * pnm1 ** 2)
    return x, w


def edge_quadrature(a: np.ndarray, b: np.ndarray, n_points: int,
                    family: str = "gauss") -> QuadratureRule:
    """Map a 1-D rule affinely onto the segment a-b."""
    if family == "gauss":
        x, w = gauss_1d(n_points)
        exact = 2 * n_points - 1
    elif family == "gauss-lobatto":
        x, w = gauss_lobatto_1d(n_points)
        exact = 2 * n_points - 3
    else:
        raise ValueError(f"unknown family {family!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = 0.5 * (x + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    length = float(np.hypot(*(b - a)))
    return QuadratureRule(pts, 0.5 * length * w, exact)


@lru_cache(maxsize=None)
def _duffy_reference(degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapsed tensor rule on the reference triangle (0,0),(1,0),(0,1).

    Under x = u, y = u v the Jacobian is u, so a degree-d integrand needs
    ceil((d+2)/2) x ceil((d+1)/2) Gauss points.
    """
    nu = (degree + 2 + 1) // 2
    nv = (degree + 1 + 1) // 2
    xu, wu = gauss_1d(max(nu, 1))
    xv, wv = gauss_1d(max(nv, 1))
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = 0.25 * np.outer(wu, wv) * uu
    return uu.ravel(), (uu * vv).ravel(), ww.ravel()


def triangle_quadrature(tri: np.ndarray, degree: int) -> QuadratureRule:
    """Positive-weight rule on a triangle, exact for polynomials <= degree."""
    u, uv, w = _duffy_reference(degree)
    v0, v1, v2 = tri
    pts = v0[None, :] + np.outer(u, v1 - v0) + np.outer(uv, v2 - v1)
    area2 = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0])
    return QuadratureRule(pts, w * area2, degree)


def polygon_triangulation(verts: np.ndarray) -> list[np.ndarray]:
    tris = geometry.fan_triangles(verts, geometry.centroid(verts))
    if tris is None:
        tris = geometry.ear_clip(verts)
    return tris


def polygon_quadrature(verts: np.ndarray, degree: int) -> QuadratureRule:
    """Rule exact for all bivariate polynomials up to the given degree."""
    pts, wts = [], []
    for tri in polygon_triangulation(verts):
        rule = triangle_quadrature(tri, degree)
        pts.append(rule.points)
        wts.append(rule.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


def graded_polygon_quadrature(verts: np.ndarray, singular_point: np.ndarray,
                              degree: int, levels: int = 24,
                              ratio: float = 0.5) -> QuadratureRule:
    """Geometrically graded rule toward a singular vertex of the polygon.

    Triangles touching the singular point are split into shells shrinking by
    `ratio` toward it; each shell gets the base rule, so r^alpha-type
    integrands (alpha > -2) converge to near machine precision.
    """
    singular_point = np.asarray(singular_point, dtype=float)
    pts, wts = [], []
    for tri in polygon_triangulation(verts):
        d = np.sqrt(((tri - singular_point) ** 2).sum(axis=1))
        k = int(np.argmin(d))
        if d[k] > 1e-12 * geometry.diameter(verts):
            rule = triangle_quadrature(tri, degree)
            pts.append(rule.points)
            wts.append(rule.weights)
            continue
        c = tri[k]
        a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
        for lev in range(levels):
            s_out = ratio ** lev
            s_in = ratio ** (lev + 1)
            ao, bo = c + s_out * (a - c), c + s_out * (b - c)
            ai, bi = c + s_in * (a - c), c + s_in * (b - c)
            for shell_tri in (np.array([ai, ao, bo]), np.array([ai, bo, bi])):
                rule = triangle_quadrature(shell_tri, degree)
                pts.append(rule.points)
                wts.append(rule.weights)
        # innermost sliver: area ~ ratio^(2*levels), integrand integrable
        tip = np.array([c, c + ratio ** levels * (a - c), c + ratio ** levels * (b - c)])
        rule = triangle_quadrature(tip, degree)
        pts.append(rule.points)
        wts.append(rule.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)
