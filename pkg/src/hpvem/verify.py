"""Self-check suites backing the ``verify`` CLI subcommand: projector
exactness on random polygons, flux equilibration on the corner benchmark,
stabilization spectra, and the efficiency-index plateau."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adapt, flux as fluxmod, mesh as meshmod, primal, problems
from .mixed import FluxElement
from .polybasis import dim_poly


@dataclass
class Check:
    """One named pass/fail result with the measured value and its bound."""

    name: str
    value: float
    bound: str
    passed: bool


def _pad(coeffs: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[:len(coeffs)] = coeffs
    return out


def _rel(err: float, ref: float) -> float:
    return err / max(ref, 1e-30)


POLYGON_KINDS = ("triangle", "quad", "hexagon", "hanging")


def random_polygon(rng: np.random.Generator, kind: str | None = None) -> np.ndarray:
    """A random valid CCW polygon: triangle, quad, hexagon, or a pentagon
    with one collinear (hanging-node style) vertex.

    Vertices are drawn star-shaped around the origin with bounded radius
    and angular-gap ratios, matching the uniform shape-regularity the mesh
    assumptions require; slivers would violate them (and push monomial
    Gram conditioning past what double precision can resolve)."""
    if kind is None:
        kind = POLYGON_KINDS[rng.integers(len(POLYGON_KINDS))]
    n = {"triangle": 3, "quad": 4, "hexagon": 6, "hanging": 4}[kind]
    while True:
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
        if gaps.min() > 0.7 and gaps.max() < np.pi - 0.4:
            break
    rad = rng.uniform(0.8, 1.2, n)
    verts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    verts = verts * rng.uniform(0.2, 3.0) + rng.uniform(-5.0, 5.0, 2)
    if kind == "hanging":
        mid = 0.5 * (verts[0] + verts[1])
        verts = np.insert(verts, 1, mid, axis=0)
    return verts


def single_cell_mesh(verts: np.ndarray) -> meshmod.PolygonalMesh:
    return meshmod.PolygonalMesh(verts, [list(range(len(verts)))])


def projector_errors(mesh: meshmod.PolygonalMesh, p: int,
                     rng: np.random.Generator) -> dict[str, float]:
    """Relative reproduction errors of the four element projectors on
    random polynomial data of matching degree.

    Errors are measured on polynomial values (vertices plus centroid), not
    raw monomial coefficients: the value metric is basis-independent,
    while coefficient differences are dominated by cancellation in the
    non-orthogonal monomial basis."""
    verts = mesh.cell_coords(0)
    pts = np.vstack([verts, verts.mean(axis=0)[None, :]])
    out = {}
    elem = primal.PrimalElement(mesh, 0, p)
    sp = elem.space

    def value_err(space, coeff_err, coeff_ref):
        ref = np.abs(space.eval_poly(coeff_ref, pts)).max()
        return _rel(np.abs(space.eval_poly(coeff_err, pts)).max(), ref)

    c = rng.standard_normal(dim_poly(p))
    dofs = elem.dof_matrix @ c
    out["pinabla"] = value_err(sp, elem.pi_nabla @ dofs - c, c)
    if p >= 2:
        c2 = rng.standard_normal(dim_poly(p - 2))
        dofs2 = elem.dof_matrix @ _pad(c2, dim_poly(p))
        out["pi0"] = value_err(sp, elem.pi0 @ dofs2 - c2, c2)
    fe = FluxElement(mesh, 0, p)
    cx = rng.standard_normal(dim_poly(p))
    cy = rng.standard_normal(dim_poly(p))
    fdofs = fe.interpolate_poly(cx, cy)
    proj = fe.pi0_matrix @ fdofs
    half = len(proj) // 2
    ref = max(np.abs(fe.space.eval_poly(_pad(cx, half), pts)).max(),
              np.abs(fe.space.eval_poly(_pad(cy, half), pts)).max())
    out["vec_pi0"] = _rel(
        max(np.abs(fe.space.eval_poly(proj[:half] - _pad(cx, half), pts)).max(),
            np.abs(fe.space.eval_poly(proj[half:] - _pad(cy, half), pts)).max()),
        ref)
    dx = fe.space.derivative_matrix(p, 0) @ cx \
        + fe.space.derivative_matrix(p, 1) @ cy
    d = fe.div_matrix @ fdofs
    ref_d = max(np.abs(fe.space.eval_poly(_pad(dx, len(d)), pts)).max(),
                ref / fe.h)
    out["div"] = _rel(
        np.abs(fe.space.eval_poly(d - _pad(dx, len(d)), pts)).max(), ref_d)
    return out


def suite_projectors(n_polygons: int = 200, seed: int = 0,
                     tol: float = 1e-10) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for k in range(n_polygons):
        mesh = single_cell_mesh(random_polygon(rng, POLYGON_KINDS[k % 4]))
        for p in range(1, 5):
            for key, val in projector_errors(mesh, p, rng).items():
                worst[key] = max(worst.get(key, 0.0), val)
    labels = {"pinabla": "energy projector reproduces P_p",
              "pi0": "L2 projector reproduces P_{p-2}",
              "vec_pi0": "vector L2 projector reproduces [P_p]^2",
              "div": "divergence projector exact on [P_p]^2"}
    return [Check(labels[k], worst[k], f"<= {tol:g}", worst[k] <= tol)
            for k in ("pinabla", "pi0", "vec_pi0", "div")]


def suite_equilibration(tol_global: float = 1e-9,
                        tol_local: float = 1e-10) -> list[Check]:
    prob = problems.get_problem("lshape-r23")
    mesh = meshmod.load_mesh("lshape(4)")
    mom = jump = bulk = edge = supp = 0.0
    for p in (1, 2, 3):
        sol = primal.assemble_and_solve(mesh, np.full(mesh.n_cells, p),
                                        f=prob.f, dirichlet=prob.dirichlet)
        res = fluxmod.compute_residuals(sol)
        gflux = fluxmod.global_reconstruct(res)
        m, j = fluxmod.check_global_equilibration(res, gflux)
        mom, jump = max(mom, m), max(jump, j)
        pou = fluxmod.PartitionOfUnity(mesh)
        b, e = fluxmod.check_partition_reassembly(res, pou)
        bulk, edge = max(bulk, b), max(edge, e)
        for patch in meshmod.vertex_patches(mesh):
            lf = fluxmod.local_reconstruct(res, pou, patch)
            supp = max(supp, _support_leak(mesh, patch, lf))
    return [
        Check("div-moment residual vs r^K", mom, f"<= {tol_global:g}",
              mom <= tol_global),
        Check("edge-jump mismatch vs r^e", jump, f"<= {tol_global:g}",
              jump <= tol_global),
        Check("bulk residual partition reassembly", bulk, f"<= {tol_local:g}",
              bulk <= tol_local),
        Check("edge residual partition reassembly", edge, f"<= {tol_local:g}",
              edge <= tol_local),
        Check("patch flux supported in omega_nu", supp, "== 0", supp == 0.0),
    ]


def _support_leak(mesh: meshmod.PolygonalMesh, patch, lf) -> float:
    """Largest normal-trace DOF on an edge not containing the patch vertex
    (must be exactly zero)."""
    leak = 0.0
    for ci, dofs in lf.cell_dofs.items():
        if ci not in patch.cells:
            leak = max(leak, float(np.abs(dofs).max(initial=0.0)))
            continue
        fe_edges = mesh.cell_edges[ci]
        n_ed = lf.degree + 1
        for k, (ei, _) in enumerate(fe_edges):
            e = mesh.edges[ei]
            if patch.vertex in (e.v0, e.v1):
                continue
            leak = max(leak, float(np.abs(dofs[k * n_ed:(k + 1) * n_ed]).max()))
    return leak


def stab_spread(mesh: meshmod.PolygonalMesh, p: int) -> tuple[float, float]:
    """(smallest M_K eigenvalue, condition of S^K on ker of the vector L2
    projector measured against the scaled-DOF inner product)."""
    fe = FluxElement(mesh, 0, p)
    lam_m = float(np.linalg.eigvalsh(fe.mass_matrix).min())
    _, s, vt = np.linalg.svd(fe.pi0_matrix)
    null = vt[int(np.sum(s > 1e-10 * s.max())):].T
    if null.shape[1] == 0:
        return lam_m, 1.0
    ev = np.linalg.eigvalsh(null.T @ fe.stab_matrix @ null)
    return lam_m, float(ev.max() / ev.min())


def suite_stabilization(n_polygons: int = 8, seed: int = 3) -> list[Check]:
    rng = np.random.default_rng(seed)
    min_eig = np.inf
    slope_worst = -np.inf
    for k in range(n_polygons):
        mesh = single_cell_mesh(random_polygon(rng, POLYGON_KINDS[k % 4]))
        spreads = []
        for p in range(0, 5):
            lam, spread = stab_spread(mesh, p)
            min_eig = min(min_eig, lam)
            if p >= 1:
                spreads.append(spread)
        logs = np.log(np.maximum(spreads, 1.0))
        slope = np.polyfit(np.log(np.arange(1, 5)), logs, 1)[0]
        slope_worst = max(slope_worst, float(slope))
    return [
        Check("M_K symmetric positive definite", min_eig, "> 0", min_eig > 0),
        Check("S^K kernel-spread growth trend (log-log slope)", slope_worst,
              "<= 8", slope_worst <= 8.0),
    ]


def benchmark_sweep(p_range=range(1, 6)) -> list[dict]:
    prob = problems.get_problem("lshape-r23")
    mesh = meshmod.load_mesh("lshape(4)")
    rows = []
    for p in p_range:
        run = adapt.run_adaptive(prob, mesh, p=p, mode="fixed",
                                 estimator="both")
        rows.append(run.history[0])
    return rows


def suite_benchmark() -> list[Check]:
    rows = benchmark_sweep()
    eff = [r["I"] for r in rows]
    eff_loc = [r["I_loc"] for r in rows]
    plateau = eff[2:]
    plateau_loc = eff_loc[2:]
    return [
        Check("I within [1.5, 3.5] for p = 1..5",
              max(abs(v - 2.5) for v in eff),
              "all in band", all(1.5 <= v <= 3.5 for v in eff)),
        Check("I plateau (p = 3..5) within 30% of 2.3",
              max(plateau), "in [1.61, 2.99]",
              all(0.7 * 2.3 <= v <= 1.3 * 2.3 for v in plateau)),
        Check("I_loc within [1.0, 2.0] for p = 1..5",
              max(abs(v - 1.5) for v in eff_loc),
              "all in band", all(1.0 <= v <= 2.0 for v in eff_loc)),
        Check("I_loc plateau (p = 3..5) within 30% of 1.3",
              max(plateau_loc), "in [0.91, 1.69]",
              all(0.7 * 1.3 <= v <= 1.3 * 1.3 for v in plateau_loc)),
    ]


SUITES = {
    "projectors": suite_projectors,
    "equilibration": suite_equilibration,
    "stabilization": suite_stabilization,
    "benchmark": suite_benchmark,
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: "
                       + ", ".join(sorted(SUITES)))
    return SUITES[name]()
