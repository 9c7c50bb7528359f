"""Equilibrated flux reconstruction by hybridized mixed virtual elements.

Residuals of the primal solution (bulk r^K and edge-jump r^e) drive two
reconstructions: one global saddle-point solve with broken fluxes glued by
Lagrange multipliers at edge Gauss nodes, and one small solve per vertex
patch whose fluxes sum to sigma_p^Delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import PolygonalMesh, VertexPatch, vertex_patches
from .mixed import FluxElement
from .polybasis import dim_poly
from .primal import PrimalElement, PrimalSolution, SolverError, _gauss_nodes


# -- residual data ---------------------------------------------------------------

@dataclass
class ResidualData:
    """Bulk and edge residuals of a primal solution.

    bulk[K] holds the coefficients of r^K = f + Lap(Pi u) in P_{p_K - 1}
    on K's scaled basis; edge jumps are evaluated on demand against the
    edge's canonical normal (out of the left cell).
    """

    solution: PrimalSolution
    bulk: list[np.ndarray]

    def edge_points(self, ei: int, params: np.ndarray) -> np.ndarray:
        a_pt, b_pt = self.solution.mesh.edge_coords(ei)
        return a_pt[None, :] + np.atleast_1d(params)[:, None] * (b_pt - a_pt)[None, :]

    def edge_jump(self, ei: int, params: np.ndarray) -> np.ndarray:
        """r^e = [[grad Pi u]] at canonical edge parameters in [0, 1]."""
        sol = self.solution
        e = sol.mesh.edges[ei]
        if e.right is None:
            raise ValueError("edge residual is defined on internal edges only")
        pts = self.edge_points(ei, params)
        n = sol.mesh.edge_normal(ei)
        gl = sol.elements[e.left].space.eval_poly_grad(
            sol.pinabla_coeffs[e.left], pts)
        gr = sol.elements[e.right].space.eval_poly_grad(
            sol.pinabla_coeffs[e.right], pts)
        return (gl - gr) @ n


def compute_residuals(solution: PrimalSolution) -> ResidualData:
    bulk = []
    for ci, elem in enumerate(solution.elements):
        p = elem.degree
        rk = np.zeros(dim_poly(p - 1))
        fc = solution.f_coeffs[ci]
        rk[:len(fc)] += fc
        lap = elem.space.laplacian_matrix(p) @ solution.pinabla_coeffs[ci]
        rk[:len(lap)] += lap
        bulk.append(rk)
    return ResidualData(solution, bulk)


# -- partition of unity ----------------------------------------------------------

class PartitionOfUnity:
    """Energy projections Pi_1 of the hat functions, element by element.

    coeffs[K] is (#loop vertices, 3): row i holds the P_1 coefficients of
    the projected hat of loop vertex i on K's scaled basis. On the skeleton
    the hats themselves are the usual piecewise linear functions.
    """

    def __init__(self, mesh: PolygonalMesh):
        self.mesh = mesh
        self.coeffs = []
        for ci in range(mesh.n_cells):
            elem = PrimalElement(mesh, ci, 1)
            self.coeffs.append(np.ascontiguousarray(elem.pi_nabla.T))

    def hat_on_edge(self, vertex: int, ei: int, params: np.ndarray) -> np.ndarray:
        """Hat value on an edge: linear in the canonical parameter, zero on
        edges not containing the vertex."""
        e = self.mesh.edges[ei]
        t = np.atleast_1d(params)
        if vertex == e.v0:
            return 1.0 - t
        if vertex == e.v1:
            return t.copy()
        return np.zeros_like(t)


def localized_bulk(residuals: ResidualData, pou: PartitionOfUnity,
                   vertex: int, ci: int) -> np.ndarray:
    """Coefficients of r^K_nu = (Pi_1 hat_nu) r^K in P_{p_K}(K)."""
    sol = residuals.solution
    loop = list(sol.mesh.cells[ci])
    li = loop.index(vertex)
    space = sol.elements[ci].space
    return space.multiply(pou.coeffs[ci][li], residuals.bulk[ci])


# -- global reconstruction -------------------------------------------------------

@dataclass
class GlobalFlux:
    degree: int
    elements: list[FluxElement]
    cell_dofs: list[np.ndarray]
    multipliers: dict[int, np.ndarray]
    norm2: float                      # ||sigma||^2 in the discrete a-norm

    def flux_energy(self, ci: int) -> float:
        d = self.cell_dofs[ci]
        return float(d @ self.elements[ci].mass_matrix @ d)


def _build_flux_elements(mesh: PolygonalMesh, q: int,
                         cache: dict | None = None) -> list[FluxElement]:
    out = []
    for ci in range(mesh.n_cells):
        key = (ci, q)
        if cache is not None and key in cache:
            out.append(cache[key])
            continue
        fe = FluxElement(mesh, ci, q)
        if cache is not None:
            cache[key] = fe
        out.append(fe)
    return out


def global_reconstruct(residuals: ResidualData, q: int | None = None,
                       cache: dict | None = None,
                       dump_path: str | None = None) -> GlobalFlux:
    """Solve the three-field system: element mass blocks, divergence
    constraints (div sigma = r^K in P_q(K)), and jump constraints at the
    Gauss nodes of internal edges ([[sigma]] = r^e).

    The scalar variable enters with +(div tau, v); the opposite sign
    convention would only flip the discarded scalar unknown.
    """
    sol = residuals.solution
    mesh = sol.mesh
    if q is None:
        q = int(sol.degrees.max()) - 1
    fes = _build_flux_elements(mesh, q, cache)

    n_q = dim_poly(q)
    flux_off = np.cumsum([0] + [fe.n_dof for fe in fes])
    scal_base = int(flux_off[-1])
    scal_off = scal_base + n_q * np.arange(mesh.n_cells + 1)
    mult_base = int(scal_off[-1])
    internal = [ei for ei, e in enumerate(mesh.edges) if e.right is not None]
    mult_of = {}
    for k, ei in enumerate(internal):
        mult_of[ei] = mult_base + (q + 1) * k
    n_tot = mult_base + (q + 1) * len(internal)

    rows, cols, vals = [], [], []
    rhs = np.zeros(n_tot)

    def add(r, c, block):
        r = np.asarray(r); c = np.asarray(c)
        rows.append(np.repeat(r, len(c)))
        cols.append(np.tile(c, len(r)))
        vals.append(np.asarray(block, dtype=float).ravel())

    for ci, fe in enumerate(fes):
        fidx = np.arange(flux_off[ci], flux_off[ci + 1])
        sidx = np.arange(scal_off[ci], scal_off[ci + 1])
        add(fidx, fidx, fe.mass_matrix)
        h_q = fe.space.mass[:n_q, :n_q]
        b_k = h_q @ fe.div_matrix
        add(sidx, fidx, b_k)
        add(fidx, sidx, b_k.T)
        rk = residuals.bulk[ci]
        rhs[sidx] = fe.space.mass[:n_q, :len(rk)] @ rk

    for ei in internal:
        e = mesh.edges[ei]
        fl, fr = fes[e.left], fes[e.right]
        kl = fl.edge_ids.index(ei)
        kr = fr.edge_ids.index(ei)
        w = fl.edge_weights[kl]
        midx = mult_of[ei] + np.arange(q + 1)
        lidx = flux_off[e.left] + np.arange(fl.n_dof)[fl.edge_dof_slice(kl)]
        ridx = flux_off[e.right] + np.arange(fr.n_dof)[fr.edge_dof_slice(kr)]
        for j in range(q + 1):
            add([midx[j]], [lidx[j]], [w[j]])
            add([lidx[j]], [midx[j]], [w[j]])
            add([midx[j]], [ridx[j]], [w[j]])
            add([ridx[j]], [midx[j]], [w[j]])
        gt, _ = _gauss_nodes(q + 1)
        rhs[midx] = w * residuals.edge_jump(ei, gt)

    mat = sp.csc_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n_tot, n_tot))
    if dump_path is not None:
        from scipy.io import mmwrite
        mmwrite(dump_path, mat.tocoo())
    try:
        x = spla.splu(mat).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"singular global flux system: {exc}") from exc
    res = np.linalg.norm(mat @ x - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or (scale > 1e-14 and res / scale > 1e-9):
        raise SolverError(f"flux solve breakdown: rel. residual {res/scale:.2e}")

    cell_dofs = [x[flux_off[ci]:flux_off[ci + 1]] for ci in range(mesh.n_cells)]
    multipliers = {ei: x[mult_of[ei]:mult_of[ei] + q + 1] for ei in internal}
    norm2 = sum(float(d @ fe.mass_matrix @ d)
                for d, fe in zip(cell_dofs, fes))
    return GlobalFlux(q, fes, cell_dofs, multipliers, norm2)


# -- local (vertex-patch) reconstruction -----------------------------------------

@dataclass
class LocalFlux:
    vertex: int
    degree: int
    cell_dofs: dict[int, np.ndarray]   # full flux DOF vectors per patch cell


def local_reconstruct(residuals: ResidualData, pou: PartitionOfUnity,
                      patch: VertexPatch, cache: dict | None = None) -> LocalFlux:
    """Solve the patch problem at vertex nu.

    Normal traces vanish on every patch edge not containing nu; jump
    constraints live on the internal edges at nu; interior vertices get a
    zero-mean scalar space via one extra Lagrange row.
    """
    sol = residuals.solution
    mesh = sol.mesh
    nu = patch.vertex
    q = int(max(sol.degrees[ci] for ci in patch.cells))
    n_q = dim_poly(q)

    fes = {}
    for ci in patch.cells:
        key = (ci, q)
        if cache is not None and key in cache:
            fes[ci] = cache[key]
        else:
            fes[ci] = FluxElement(mesh, ci, q)
            if cache is not None:
                cache[key] = fes[ci]

    # free flux DOFs: moment blocks plus trace blocks on edges containing nu
    free_idx = {}
    offset = 0
    flux_off = {}
    for ci in patch.cells:
        fe = fes[ci]
        keep = list(range(fe.grad_offset, fe.n_dof))
        for k, ei in enumerate(fe.edge_ids):
            e = mesh.edges[ei]
            if nu in (e.v0, e.v1):
                keep = list(range(k * fe.n_edge_dofs,
                                  (k + 1) * fe.n_edge_dofs)) + keep
        keep = sorted(set(keep))
        free_idx[ci] = np.array(keep, dtype=int)
        flux_off[ci] = offset
        offset += len(keep)
    scal_off = {}
    for ci in patch.cells:
        scal_off[ci] = offset
        offset += n_q
    mult_off = {}
    for ei in patch.interior_edges:
        mult_off[ei] = offset
        offset += q + 1
    mean_row = None
    if not patch.is_boundary_vertex:
        mean_row = offset
        offset += 1
    n_tot = offset

    mat = np.zeros((n_tot, n_tot))
    rhs = np.zeros(n_tot)
    for ci in patch.cells:
        fe = fes[ci]
        fi = flux_off[ci] + np.arange(len(free_idx[ci]))
        si = scal_off[ci] + np.arange(n_q)
        keep = free_idx[ci]
        mat[np.ix_(fi, fi)] = fe.mass_matrix[np.ix_(keep, keep)]
        b_k = (fe.space.mass[:n_q, :n_q] @ fe.div_matrix)[:, keep]
        mat[np.ix_(si, fi)] = b_k
        mat[np.ix_(fi, si)] = b_k.T
        rknu = localized_bulk(residuals, pou, nu, ci)
        rhs[si] = fe.space.mass[:n_q, :len(rknu)] @ rknu
        if mean_row is not None:
            ints = fe.space.mass[0, :n_q]  # (1, m_j)_K
            mat[mean_row, si] = ints
            mat[si, mean_row] = ints

    gt, _ = _gauss_nodes(q + 1)
    for ei in patch.interior_edges:
        e = mesh.edges[ei]
        mi = mult_off[ei] + np.arange(q + 1)
        w = None
        for ci in (e.left, e.right):
            fe = fes[ci]
            k = fe.edge_ids.index(ei)
            w = fe.edge_weights[k]
            local = np.arange(fe.n_dof)[fe.edge_dof_slice(k)]
            pos = np.searchsorted(free_idx[ci], local)
            assert np.all(free_idx[ci][pos] == local)
            gi = flux_off[ci] + pos
            mat[mi, gi] += w
            mat[gi, mi] += w
        hat = pou.hat_on_edge(nu, ei, gt)
        rhs[mi] = w * hat * residuals.edge_jump(ei, gt)

    try:
        lu = np.linalg.solve
        x = lu(mat, rhs)
        x += lu(mat, rhs - mat @ x)       # one refinement step
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular patch system at vertex {nu}") from exc
    res = np.linalg.norm(mat @ x - rhs)
    # normwise backward error: immune to the conditioning floor of ||r||/||b||
    scale = np.linalg.norm(mat) * np.linalg.norm(x) + np.linalg.norm(rhs)
    if not np.isfinite(res) or (scale > 1e-300 and res / scale > 1e-10):
        raise SolverError(
            f"patch solve breakdown at vertex {nu}: backward error {res/scale:.2e}")

    cell_dofs = {}
    for ci in patch.cells:
        full = np.zeros(fes[ci].n_dof)
        full[free_idx[ci]] = x[flux_off[ci]:flux_off[ci] + len(free_idx[ci])]
        cell_dofs[ci] = full
    return LocalFlux(nu, q, cell_dofs)


@dataclass
class SummedFlux:
    degrees: list[int]                # lifted degree per cell
    elements: list[FluxElement]
    cell_dofs: list[np.ndarray]
    norm2: float

    def flux_energy(self, ci: int) -> float:
        d = self.cell_dofs[ci]
        return float(d @ self.elements[ci].mass_matrix @ d)


def sum_local_fluxes(residuals: ResidualData, locals_: list[LocalFlux],
                     cache: dict | None = None) -> SummedFlux:
    """sigma_p^Delta = sum over vertices of the patch fluxes, accumulated
    per element; contributions of unequal degree are lifted to the
    element's maximal patch degree first."""
    mesh = residuals.solution.mesh
    contrib: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(mesh.n_cells)]
    for lf in locals_:
        for ci, dofs in lf.cell_dofs.items():
            contrib[ci].append((lf.degree, dofs))

    degrees, elements, cell_dofs = [], [], []
    norm2 = 0.0
    for ci in range(mesh.n_cells):
        if not contrib[ci]:
            raise SolverError(f"cell {ci} received no patch contributions")
        q_max = max(qd for qd, _ in contrib[ci])
        key = (ci, q_max)
        if cache is not None and key in cache:
            target = cache[key]
        else:
            target = FluxElement(mesh, ci, q_max)
            if cache is not None:
                cache[key] = target
        total = np.zeros(target.n_dof)
        for qd, dofs in contrib[ci]:
            if qd == q_max:
                total += dofs
            else:
                src = cache[(ci, qd)] if cache is not None and (ci, qd) in cache \
                    else FluxElement(mesh, ci, qd)
                total += src.lift_dofs(dofs, target)
        degrees.append(q_max)
        elements.append(target)
        cell_dofs.append(total)
        norm2 += float(total @ target.mass_matrix @ total)
    return SummedFlux(degrees, elements, cell_dofs, norm2)


def reconstruct_all_local(residuals: ResidualData,
                          cache: dict | None = None) -> tuple[SummedFlux, list[LocalFlux]]:
    mesh = residuals.solution.mesh
    pou = PartitionOfUnity(mesh)
    locals_ = [local_reconstruct(residuals, pou, patch, cache)
               for patch in vertex_patches(mesh)]
    return sum_local_fluxes(residuals, locals_, cache), locals_


# -- post-solve verification -----------------------------------------------------

def check_global_equilibration(residuals: ResidualData,
                               gflux: GlobalFlux) -> tuple[float, float]:
    """Max abs moment residual of div sigma vs r^K and max abs Gauss-node
    jump mismatch vs r^e."""
    mesh = residuals.solution.mesh
    q = gflux.degree
    mom_err = 0.0
    for ci, fe in enumerate(gflux.elements):
        d = fe.div_matrix @ gflux.cell_dofs[ci]
        rk = residuals.bulk[ci]
        n_q = dim_poly(q)
        diff = fe.space.mass[:n_q, :n_q] @ d \
            - fe.space.mass[:n_q, :len(rk)] @ rk
        mom_err = max(mom_err, float(np.abs(diff).max()))
    jump_err = 0.0
    gt, _ = _gauss_nodes(q + 1)
    for ei, e in enumerate(mesh.edges):
        if e.right is None:
            continue
        fl, fr = gflux.elements[e.left], gflux.elements[e.right]
        kl = fl.edge_ids.index(ei)
        kr = fr.edge_ids.index(ei)
        jmp = fl.trace_values(gflux.cell_dofs[e.left], kl, gt) \
            + fr.trace_values(gflux.cell_dofs[e.right], kr, gt)
        jump_err = max(jump_err, float(np.abs(jmp - residuals.edge_jump(ei, gt)).max()))
    return mom_err, jump_err


def check_partition_reassembly(residuals: ResidualData,
                               pou: PartitionOfUnity) -> tuple[float, float]:
    """Max coefficient error of sum_nu r^K_nu vs r^K and max Gauss-node
    error of sum_nu r^e_nu vs r^e."""
    sol = residuals.solution
    mesh = sol.mesh
    bulk_err = 0.0
    for ci in range(mesh.n_cells):
        p = sol.elements[ci].degree
        total = np.zeros(dim_poly(p))
        for v in mesh.cells[ci]:
            total += localized_bulk(residuals, pou, int(v), ci)
        rk = residuals.bulk[ci]
        total[:len(rk)] -= rk
        bulk_err = max(bulk_err, float(np.abs(total).max()))
    edge_err = 0.0
    for ei, e in enumerate(mesh.edges):
        if e.right is None:
            continue
        pe = int(residuals.solution.edge_degrees[ei])
        gt, _ = _gauss_nodes(pe + 1)
        re = residuals.edge_jump(ei, gt)
        total = (pou.hat_on_edge(e.v0, ei, gt)
                 + pou.hat_on_edge(e.v1, ei, gt)) * re
        edge_err = max(edge_err, float(np.abs(total - re).max()))
    return bulk_err, edge_err
