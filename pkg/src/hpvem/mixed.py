"""Broken mixed virtual elements for the flux reconstruction.

Per-element DOFs: outward normal-trace values at the p+1 Gauss nodes of
each edge, gradient-type interior moments up to order p-1, and
completion-type moments up to order p. The divergence and the vector L2
projector are computed from DOFs; the local form adds the h-weighted
boundary/divergence stabilization on the non-polynomial part.
"""

from __future__ import annotations

import numpy as np

from . import quadrature
from .mesh import PolygonalMesh
from .polybasis import (ScaledMonomialSpace, VectorPolyDecomposition,
                        build_decomposition, dim_poly, monomial_exponents,
                        solve_refined)
from .primal import lagrange_eval, _gauss_nodes


class FluxElement:
    """Mixed VEM element of degree p >= 0 on one polygon.

    Edge DOFs are stored in the canonical direction of each mesh edge
    (v0 -> v1) so that the two sides of an internal edge share node order;
    the stored values are traces against the element's outward normal.
    """

    #: calibration constant multiplying S^K; see PrimalElement.STAB_SCALE.
    STAB_SCALE = 4.0

    def __init__(self, mesh: PolygonalMesh, ci: int, p: int,
                 stab_scale: float | None = None):
        if p < 0:
            raise ValueError("flux degree must be >= 0")
        self.stab_scale = self.STAB_SCALE if stab_scale is None else stab_scale
        self.cell = ci
        self.degree = p
        self.mesh = mesh
        verts = mesh.cell_coords(ci)
        self.space = ScaledMonomialSpace(verts, p + 1,
                                         quad_exactness=2 * (p + 1) + 3)
        self.area = self.space.area
        self.h = self.space.diameter
        self.decomp: VectorPolyDecomposition = build_decomposition(self.space, p)
        self.n_poly = dim_poly(p)

        self.edge_ids = [ei for ei, _ in mesh.cell_edges[ci]]
        self.edge_signs = [sign for _, sign in mesh.cell_edges[ci]]
        self.n_edges = len(self.edge_ids)
        self.n_edge_dofs = p + 1
        self.n_grad_mom = dim_poly(p) - 1           # g_{p-1} = dim P_p - 1
        self.n_perp_mom = self.decomp.n_perp
        self.n_dof = self.n_edges * self.n_edge_dofs + self.n_grad_mom \
            + self.n_perp_mom
        self.grad_offset = self.n_edges * self.n_edge_dofs
        self.perp_offset = self.grad_offset + self.n_grad_mom

        self._edge_geometry()
        self._build_div()
        self._build_pi0()
        self._build_mass()

    # -- geometry / DOF bookkeeping ---------------------------------------------
    def _edge_geometry(self):
        mesh = self.mesh
        p = self.degree
        gt, gw = _gauss_nodes(p + 1)
        self.gauss_params = gt
        self.edge_points = []    # Gauss nodes in canonical edge order
        self.edge_weights = []   # physical quadrature weights
        self.edge_normals = []   # element outward unit normal
        self.edge_lengths = []
        for ei, sign in zip(self.edge_ids, self.edge_signs):
            a_pt, b_pt = mesh.edge_coords(ei)
            length = float(np.hypot(*(b_pt - a_pt)))
            pts = a_pt[None, :] + gt[:, None] * (b_pt - a_pt)[None, :]
            n = mesh.edge_normal(ei) * (1.0 if sign > 0 else -1.0)
            self.edge_points.append(pts)
            self.edge_weights.append(gw * length)
            self.edge_normals.append(n)
            self.edge_lengths.append(length)

    def edge_dof_slice(self, k: int) -> slice:
        return slice(k * self.n_edge_dofs, (k + 1) * self.n_edge_dofs)

    # -- divergence --------------------------------------------------------------
    def _build_div(self):
        """DIV: DOFs -> coefficients of div tau in P_p, via
        (div tau, m)_K = -(tau, grad m)_K + (n.tau, m)_dK."""
        p = self.degree
        n_p = self.n_poly
        rhs = np.zeros((n_p, self.n_dof))
        for k in range(self.n_edges):
            phi = self.space.eval_basis(self.edge_points[k], degree=p)
            rhs[:, self.edge_dof_slice(k)] += \
                (phi * self.edge_weights[k][:, None]).T
        # -(tau, grad m)_K: the gradient-moment DOF is h_K (tau, grad m)/|K|
        # (dimensionless, like the trace DOFs), so (tau, grad m) = |K| dof / h_K
        for j in range(1, n_p):
            rhs[j, self.grad_offset + j - 1] -= self.area / self.h
        self.div_matrix = solve_refined(self.space.mass[:n_p, :n_p], rhs)

    # -- vector L2 projector -------------------------------------------------------
    def _build_pi0(self):
        """Pi0_p in the G/Gperp basis, then in component coefficients."""
        p = self.degree
        n_p = self.n_poly
        dec = self.decomp
        moments = np.zeros((dec.n_total, self.n_dof))
        # gradient moments: deg q in 1..p directly from DOFs
        for j in range(self.n_grad_mom):
            moments[j, self.grad_offset + j] = self.area / self.h
        # deg q = p+1 gradients via -(div tau, q)_K + (n.tau, q)_dK
        hi = range(self.n_grad_mom, dec.n_grad)
        exps_hi = monomial_exponents(p + 1)[n_p:]
        mass_big = self.space.mass  # P_{p+1} Gram
        for row, _ in zip(hi, exps_hi):
            col = row + 1  # monomial index in P_{p+1} (skip the constant)
            moments[row] -= mass_big[col, :n_p] @ self.div_matrix
            for k in range(self.n_edges):
                q_vals = self.space.eval_basis(self.edge_points[k],
                                               degree=p + 1)[:, col]
                moments[row, self.edge_dof_slice(k)] += \
                    q_vals * self.edge_weights[k]
        # completion moments directly from DOFs
        for j in range(self.n_perp_mom):
            moments[dec.n_grad + j, self.perp_offset + j] = self.area
        lam = solve_refined(dec.gram, moments)
        self.pi0_matrix = dec.basis @ lam       # (2 n_p, n_dof) component coeffs

    # -- local bilinear form --------------------------------------------------------
    def _build_mass(self):
        p = self.degree
        n_p = self.n_poly
        h_p = self.space.mass[:n_p, :n_p]
        consistency = self.pi0_matrix.T @ np.kron(np.eye(2), h_p) @ self.pi0_matrix

        # boundary part of S on (I - Pi0): traces at p+2 Gauss nodes,
        # reconstructed from the p+1 DOF nodes
        gt2, gw2 = _gauss_nodes(p + 2)
        interp = lagrange_eval(self.gauss_params, gt2)  # (p+2, p+1)
        s_bnd = np.zeros((self.n_dof, self.n_dof))
        for k in range(self.n_edges):
            a_pt, b_pt = self.mesh.edge_coords(self.edge_ids[k])
            pts2 = a_pt[None, :] + gt2[:, None] * (b_pt - a_pt)[None, :]
            w2 = gw2 * self.edge_lengths[k]
            n = self.edge_normals[k]
            # n.(tau) at the finer nodes from the DOF values
            tr = np.zeros((p + 2, self.n_dof))
            tr[:, self.edge_dof_slice(k)] = interp
            # n.(Pi0 tau) at the finer nodes
            phi2 = self.space.eval_basis(pts2, degree=p)
            tr -= (n[0] * phi2 @ self.pi0_matrix[:n_p]
                   + n[1] * phi2 @ self.pi0_matrix[n_p:])
            s_bnd += tr.T @ (w2[:, None] * tr)
        # divergence part: div(I - Pi0)tau in P_p coefficients
        dxm = self.space.derivative_matrix(p, 0)
        dym = self.space.derivative_matrix(p, 1)
        div_pi0 = np.zeros((n_p, self.n_dof))
        div_pi0[:dim_poly(p - 1)] = dxm @ self.pi0_matrix[:n_p] \
            + dym @ self.pi0_matrix[n_p:]
        ddiv = self.div_matrix - div_pi0
        s_div = ddiv.T @ h_p @ ddiv
        self.stab_matrix = self.stab_scale * (self.h * s_bnd
                                              + self.h ** 2 * s_div)
        self.mass_matrix = consistency + self.stab_matrix

    # -- DOF functionals of explicit fields -------------------------------------------
    def interpolate(self, field) -> np.ndarray:
        """DOF vector of a smooth vector field (callable pts -> (n, 2))."""
        dofs = np.zeros(self.n_dof)
        for k in range(self.n_edges):
            vals = np.asarray(field(self.edge_points[k]))
            dofs[self.edge_dof_slice(k)] = vals @ self.edge_normals[k]
        rule = quadrature.polygon_quadrature(self.space.verts,
                                             2 * self.degree + 6)
        vals = np.asarray(field(rule.points))
        phi = self.space.eval_basis(rule.points, degree=self.degree)
        comp = np.concatenate([phi.T @ (rule.weights * vals[:, 0]),
                               phi.T @ (rule.weights * vals[:, 1])])
        mom = self.decomp.basis.T @ comp / self.area
        dofs[self.grad_offset:self.grad_offset + self.n_grad_mom] = \
            self.h * mom[:self.n_grad_mom]
        dofs[self.perp_offset:] = mom[self.decomp.n_grad:]
        return dofs

    def interpolate_poly(self, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
        """DOF vector of a [P_p]^2 field given by component coefficients."""
        return self.interpolate(
            lambda pts: np.stack([self.space.eval_poly(cx, pts),
                                  self.space.eval_poly(cy, pts)], axis=1))

    def trace_values(self, dofs: np.ndarray, k: int,
                     params: np.ndarray) -> np.ndarray:
        """Outward normal trace on loop edge k at edge parameters in [0,1]."""
        vals = dofs[self.edge_dof_slice(k)]
        return lagrange_eval(self.gauss_params, np.atleast_1d(params)) @ vals

    def lift_dofs(self, dofs: np.ndarray, target: "FluxElement") -> np.ndarray:
        """Embed a degree-p virtual flux into a higher-degree flux element
        on the same cell.

        Edge traces and all gradient-type moments are exact (the divergence
        and normal traces are DOF-computable); completion moments beyond
        degree p use the polynomial part Pi0 tau as proxy, so polynomial
        fluxes lift exactly.
        """
        if target.cell != self.cell:
            raise ValueError("lift requires the same cell")
        q = target.degree
        p = self.degree
        if q == p:
            return dofs.copy()
        if q < p:
            raise ValueError("can only lift to a higher degree")
        out = np.zeros(target.n_dof)
        interp = lagrange_eval(self.gauss_params, target.gauss_params)
        for k in range(self.n_edges):
            out[target.edge_dof_slice(k)] = interp @ dofs[self.edge_dof_slice(k)]
        div_c = self.div_matrix @ dofs          # P_p coefficients of div
        n_p = self.n_poly
        # gradient moments (tau, grad m)/|K| for deg m = 1..q
        exps = monomial_exponents(q)
        big = ScaledMonomialSpace(self.space.verts, q,
                                  quad_exactness=2 * q + 3) \
            if q > self.space.degree else self.space
        mass = big.mass
        gt, gw = _gauss_nodes(q + 1)
        for j, (_a, _b) in enumerate(exps[1:], start=1):
            val = -float(mass[j, :n_p] @ div_c)
            for k in range(self.n_edges):
                a_pt, b_pt = self.mesh.edge_coords(self.edge_ids[k])
                pts = a_pt[None, :] + gt[:, None] * (b_pt - a_pt)[None, :]
                w = gw * self.edge_lengths[k]
                mv = big.eval_basis(pts, degree=q)[:, j]
                tr = self.trace_values(dofs, k, gt)
                val += float(np.dot(w, mv * tr))
            out[target.grad_offset + j - 1] = self.h * val / self.area
        # completion moments: exact up to degree p, Pi0 proxy above
        cx = np.zeros(dim_poly(q))
        cy = np.zeros(dim_poly(q))
        comp = self.pi0_matrix @ dofs
        cx[:n_p] = comp[:n_p]
        cy[:n_p] = comp[n_p:]
        n_q = dim_poly(q)
        full = np.concatenate([mass[:n_q, :n_q] @ cx, mass[:n_q, :n_q] @ cy])
        proxy = target.decomp.basis.T @ full / self.area
        out[target.perp_offset:] = proxy[target.decomp.n_grad:]
        out[target.perp_offset:target.perp_offset + self.n_perp_mom] = \
            dofs[self.perp_offset:]
        return out


def jump_rows(mesh: PolygonalMesh, ei: int, left_elem: FluxElement,
              right_elem: FluxElement) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coupling rows of c(tau, mu) on an internal edge against the Lagrange
    multiplier basis at the edge's Gauss nodes.

    Returns (weights, left DOF slice indices, right DOF slice indices); with
    outward-normal DOFs on both sides the jump at node j is just the sum of
    the two DOF values, so row j is w_j * (tau_L[j] + tau_R[j]).
    """
    e = mesh.edges[ei]
    if e.right is None:
        raise ValueError("jump rows only exist on internal edges")
    kl = left_elem.edge_ids.index(ei)
    kr = right_elem.edge_ids.index(ei)
    w = left_elem.edge_weights[kl]
    left_idx = np.arange(left_elem.n_dof)[left_elem.edge_dof_slice(kl)]
    right_idx = np.arange(right_elem.n_dof)[right_elem.edge_dof_slice(kr)]
    return w, left_idx, right_idx
