"""Planar polygon primitives shared by the mesh and quadrature layers."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


def signed_area(verts: np.ndarray) -> float:
    """Shoelace signed area of a closed polygon given as an (n, 2) array."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def centroid(verts: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def diameter(verts: np.ndarray) -> float:
    """Largest vertex-to-vertex distance."""
    d = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((d ** 2).sum(axis=2)).max())


def is_simple(verts: np.ndarray, tol: float = 1e-14) -> bool:
    """Check that no two non-adjacent polygon edges intersect.

    Adjacent edges may only touch at their shared vertex. Collinear hanging
    vertices are fine: consecutive parallel edges do not count as crossings.
    """
    n = len(verts)
    segs = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    scale = max(diameter(verts), 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_intersect(*segs[i], *segs[j], tol * scale):
                return False
    # repeated vertices also break simplicity
    for i in range(n):
        for j in range(i + 1, n):
            if np.allclose(verts[i], verts[j], atol=tol * scale):
                return False
    return True


def _segments_intersect(p1, p2, q1, q2, tol) -> bool:
    d1 = p2 - p1
    d2 = q2 - q1
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    r = q1 - p1
    if abs(denom) < tol * tol:
        # parallel: overlap only if collinear and ranges intersect
        if abs(d1[0] * r[1] - d1[1] * r[0]) > tol:
            return False
        t0 = np.dot(r, d1) / np.dot(d1, d1)
        t1 = t0 + np.dot(d2, d1) / np.dot(d1, d1)
        lo, hi = min(t0, t1), max(t0, t1)
        return hi > tol and lo < 1.0 - tol
    t = (r[0] * d2[1] - r[1] * d2[0]) / denom
    u = (r[0] * d1[1] - r[1] * d1[0]) / denom
    eps = tol
    return eps < t < 1.0 - eps and eps < u < 1.0 - eps


def kernel_chebyshev_ball(verts: np.ndarray) -> tuple[np.ndarray, float]:
    """Largest ball inside the polygon's kernel (star-shapedness region).

    Solves the LP max r s.t. n_e . x - r >= n_e . a_e for the inward normal
    of every directed boundary edge. For convex polygons this is the
    Chebyshev ball; an empty kernel yields r <= 0.
    """
    n = len(verts)
    a_ub = np.zeros((n, 3))
    b_ub = np.zeros(n)
    for i in range(n):
        p, q = verts[i], verts[(i + 1) % n]
        t = q - p
        length = np.hypot(*t)
        inward = np.array([-t[1], t[0]]) / length  # CCW loop: interior on the left
        a_ub[i, :2] = -inward
        a_ub[i, 2] = 1.0
        b_ub[i] = -np.dot(inward, p)
    c = np.array([0.0, 0.0, -1.0])
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    res = linprog(c, A_ub=a_ub, b_ub=b_ub,
                  bounds=[(lo[0], hi[0]), (lo[1], hi[1]), (None, None)])
    if not res.success:
        return centroid(verts), 0.0
    x, y, r = res.x
    return np.array([x, y]), float(max(r, 0.0))


def fan_triangles(verts: np.ndarray, apex: np.ndarray) -> list[np.ndarray] | None:
    """Fan triangulation from an interior point; None if any triangle flips."""
    n = len(verts)
    tris = []
    area_scale = abs(signed_area(verts))
    for i in range(n):
        tri = np.array([apex, verts[i], verts[(i + 1) % n]])
        a = signed_area(tri)
        if a < -1e-14 * area_scale:
            return None
        if a > 1e-14 * area_scale:
            tris.append(tri)
    return tris


def ear_clip(verts: np.ndarray) -> list[np.ndarray]:
    """Ear-clipping triangulation of a simple CCW polygon."""
    idx = list(range(len(verts)))
    tris: list[np.ndarray] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("ear clipping failed; polygon may not be simple")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            tri = verts[[i0, i1, i2]]
            if signed_area(tri) <= 1e-15 * abs(signed_area(verts)):
                continue
            if any(_point_in_triangle(verts[j], tri) for j in idx
                   if j not in (i0, i1, i2)):
                continue
            tris.append(tri)
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            raise ValueError("no ear found; polygon may not be simple")
    tris.append(verts[idx])
    return tris


def _point_in_triangle(p, tri) -> bool:
    a, b, c = tri
    s1 = np.cross(b - a, p - a)
    s2 = np.cross(c - b, p - b)
    s3 = np.cross(a - c, p - c)
    return s1 >= 0 and s2 >= 0 and s3 >= 0
