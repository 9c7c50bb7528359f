"""Scaled monomial bases on polygons and the gradient/completion split of
vector polynomials; every projector in the solver is assembled from these.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from . import geometry, quadrature


@lru_cache(maxsize=None)
def monomial_exponents(p: int) -> tuple[tuple[int, int], ...]:
    """Exponent pairs of P_p in graded lexicographic order."""
    out = []
    for k in range(p + 1):
        for a in range(k, -1, -1):
            out.append((a, k - a))
    return tuple(out)


def solve_refined(a: np.ndarray, b: np.ndarray, steps: int = 2) -> np.ndarray:
    """Dense solve with iterative refinement; Gram matrices of scaled
    monomials on thin polygons reach condition 1e12+ at high degree, and
    refinement recovers the lost digits."""
    fac = sla.lu_factor(a)
    x = sla.lu_solve(fac, b)
    for _ in range(steps):
        x += sla.lu_solve(fac, b - a @ x)
    return x


def dim_poly(p: int) -> int:
    """dim P_p = (p+1)(p+2)/2 in two variables; 0 for negative p."""
    if p < 0:
        return 0
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def _exponent_index(p: int) -> dict[tuple[int, int], int]:
    return {e: i for i, e in enumerate(monomial_exponents(p))}


class ScaledMonomialSpace:
    """Basis m_a((x - x_K)/h_K) of P_p(K) with cached Gram matrices.

    The basis is invariant under translation and dilation of K; mass-type
    Grams scale with |K| while the stiffness Gram is scale-free.
    """

    def __init__(self, verts: np.ndarray, degree: int,
                 quad_exactness: int | None = None):
        self.verts = np.asarray(verts, dtype=float)
        self.degree = degree
        self.centroid = geometry.centroid(self.verts)
        self.diameter = geometry.diameter(self.verts)
        self.area = geometry.signed_area(self.verts)
        if self.area <= 0:
            raise ValueError("polygon must be CCW with positive area")
        self.exponents = np.array(monomial_exponents(degree))
        self.dim = dim_poly(degree)
        exact = quad_exactness if quad_exactness is not None else 2 * degree + 3
        self.quad = quadrature.polygon_quadrature(self.verts, exact)
        self._phi = self.eval_basis(self.quad.points)
        self.mass = (self._phi * self.quad.weights[:, None]).T @ self._phi
        gx, gy = self.eval_basis_grad(self.quad.points)
        self.stiffness = ((gx * self.quad.weights[:, None]).T @ gx
                          + (gy * self.quad.weights[:, None]).T @ gy)

    # -- evaluation ---------------------------------------------------------
    def scaled_coords(self, pts: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(pts) - self.centroid) / self.diameter

    def eval_basis(self, pts: np.ndarray, degree: int | None = None) -> np.ndarray:
        """(npts, dim) array of basis values."""
        p = self.degree if degree is None else degree
        xi = self.scaled_coords(pts)
        xp = np.ones((len(xi), p + 1))
        yp = np.ones((len(xi), p + 1))
        for k in range(1, p + 1):
            xp[:, k] = xp[:, k - 1] * xi[:, 0]
            yp[:, k] = yp[:, k - 1] * xi[:, 1]
        exps = monomial_exponents(p)
        out = np.empty((len(xi), len(exps)))
        for j, (a, b) in enumerate(exps):
            out[:, j] = xp[:, a] * yp[:, b]
        return out

    def eval_basis_grad(self, pts: np.ndarray,
                        degree: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        p = self.degree if degree is None else degree
        phi = self.eval_basis(pts, degree=p)
        idx = _exponent_index(p)
        gx = np.zeros_like(phi)
        gy = np.zeros_like(phi)
        for j, (a, b) in enumerate(monomial_exponents(p)):
            if a > 0:
                gx[:, j] = a * phi[:, idx[(a - 1, b)]] / self.diameter
            if b > 0:
                gy[:, j] = b * phi[:, idx[(a, b - 1)]] / self.diameter
        return gx, gy

    def eval_poly(self, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
        p = _degree_of_dim(len(coeffs))
        return self.eval_basis(pts, degree=p) @ coeffs

    def eval_poly_grad(self, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
        p = _degree_of_dim(len(coeffs))
        gx, gy = self.eval_basis_grad(pts, degree=p)
        return np.stack([gx @ coeffs, gy @ coeffs], axis=1)

    # -- coefficient operators ----------------------------------------------
    def derivative_matrix(self, p: int, axis: int) -> np.ndarray:
        """Coefficients of d/dx (axis=0) or d/dy from P_p to P_{p-1}."""
        src = monomial_exponents(p)
        dst = _exponent_index(max(p - 1, 0))
        d = np.zeros((dim_poly(p - 1), dim_poly(p)))
        for j, (a, b) in enumerate(src):
            if axis == 0 and a > 0:
                d[dst[(a - 1, b)], j] = a / self.diameter
            if axis == 1 and b > 0:
                d[dst[(a, b - 1)], j] = b / self.diameter
        return d

    def laplacian_matrix(self, p: int) -> np.ndarray:
        """Coefficients of the Laplacian, P_p -> P_{p-2}."""
        src = monomial_exponents(p)
        dst = _exponent_index(max(p - 2, 0))
        lap = np.zeros((dim_poly(p - 2), dim_poly(p)))
        h2 = self.diameter ** 2
        for j, (a, b) in enumerate(src):
            if a >= 2:
                lap[dst[(a - 2, b)], j] += a * (a - 1) / h2
            if b >= 2:
                lap[dst[(a, b - 2)], j] += b * (b - 1) / h2
        return lap

    def multiply(self, ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
        """Coefficients of the product of two polynomials in this basis."""
        pa = _degree_of_dim(len(ca))
        pb = _degree_of_dim(len(cb))
        dst = _exponent_index(pa + pb)
        out = np.zeros(dim_poly(pa + pb))
        ea = monomial_exponents(pa)
        eb = monomial_exponents(pb)
        for i, (a1, b1) in enumerate(ea):
            if ca[i] == 0.0:
                continue
            for j, (a2, b2) in enumerate(eb):
                out[dst[(a1 + a2, b1 + b2)]] += ca[i] * cb[j]
        return out

    def mass_block(self, p_row: int, p_col: int) -> np.ndarray:
        """(m_a, m_b)_K for deg a <= p_row, deg b <= p_col (from the cache)."""
        pmax = max(p_row, p_col)
        if pmax <= self.degree:
            return self.mass[:dim_poly(p_row), :dim_poly(p_col)]
        phi = self.eval_basis(self.quad.points, degree=pmax)
        if self.quad.exactness < 2 * pmax:
            rule = quadrature.polygon_quadrature(self.verts, 2 * pmax + 1)
            phi = self.eval_basis(rule.points, degree=pmax)
            big = (phi * rule.weights[:, None]).T @ phi
        else:
            big = (phi * self.quad.weights[:, None]).T @ phi
        return big[:dim_poly(p_row), :dim_poly(p_col)]


@lru_cache(maxsize=None)
def _degree_of_dim(n: int) -> int:
    p = 0
    while dim_poly(p) < n:
        p += 1
    if dim_poly(p) != n:
        raise ValueError(f"{n} is not a triangular dimension of P_p")
    return p


@dataclass
class VectorPolyDecomposition:
    """[P_p]^2 = G_p + Gperp_p with G_p = grad P_{p+1} and the rotated
    scaled-monomial completion Gperp_p = {m_b (eta, -xi)}.

    Columns of `basis` hold each member's component coefficients in the
    scalar P_p basis, x-components stacked over y-components.
    """

    degree: int
    n_grad: int
    n_perp: int
    basis: np.ndarray          # (2*dim P_p, n_grad + n_perp)
    gram: np.ndarray = field(repr=False)  # SPD Gram of the combined basis

    @property
    def n_total(self) -> int:
        return self.n_grad + self.n_perp


def build_decomposition(space: ScaledMonomialSpace, p: int) -> VectorPolyDecomposition:
    n = dim_poly(p)
    idx_p = _exponent_index(p)
    cols = []
    # gradients of scaled monomials of degree 1 .. p+1
    for (a, b) in monomial_exponents(p + 1)[1:]:
        cx = np.zeros(n)
        cy = np.zeros(n)
        if a > 0:
            cx[idx_p[(a - 1, b)]] = a / space.diameter
        if b > 0:
            cy[idx_p[(a, b - 1)]] = b / space.diameter
        cols.append(np.concatenate([cx, cy]))
    n_grad = len(cols)
    # rotated completion m_b * (eta, -xi), deg b <= p-1
    for (a, b) in monomial_exponents(p - 1) if p >= 1 else ():
        cx = np.zeros(n)
        cy = np.zeros(n)
        cx[idx_p[(a, b + 1)]] = 1.0
        cy[idx_p[(a + 1, b)]] = -1.0
        cols.append(np.concatenate([cx, cy]))
    n_perp = len(cols) - n_grad
    basis = np.column_stack(cols) if cols else np.zeros((2 * n, 0))
    h = space.mass[:n, :n]
    gram = basis.T @ np.kron(np.eye(2), h) @ basis
    if basis.shape[1] != 2 * n:
        raise ValueError("decomposition dimension mismatch")
    # rank check: Cholesky fails on a rank-deficient completion
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("combined G/Gperp basis is numerically rank deficient") from exc
    return VectorPolyDecomposition(p, n_grad, n_perp, basis, gram)
