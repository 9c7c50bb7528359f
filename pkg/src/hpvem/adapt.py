"""Error estimation, efficiency indices, marking, and the h/p/hp-adaptive
driver loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import flux as fluxmod
from . import mesh as meshmod
from . import primal, quadrature
from .problems import Problem


@dataclass
class EstimatorReport:
    """Per-element and total estimator data for one solve."""

    flux_terms: np.ndarray        # ||sigma||^2_{a,K} per element
    stab_terms: np.ndarray        # primal stabilization energy per element
    eta: float
    error: float | None = None    # projected H1 error, when exact data known
    efficiency: float | None = None

    @property
    def eta_cells(self) -> np.ndarray:
        """Per-element estimator sqrt(flux + stabilization term)."""
        return np.sqrt(self.flux_terms + self.stab_terms)


def estimate_global(solution: primal.PrimalSolution,
                    gflux: fluxmod.GlobalFlux) -> EstimatorReport:
    flux_terms = np.array([gflux.flux_energy(ci)
                           for ci in range(solution.mesh.n_cells)])
    stab = solution.stab_energies
    return EstimatorReport(flux_terms, stab,
                           float(np.sqrt(flux_terms.sum() + stab.sum())))


def estimate_local(solution: primal.PrimalSolution,
                   sflux: fluxmod.SummedFlux) -> EstimatorReport:
    flux_terms = np.array([sflux.flux_energy(ci)
                           for ci in range(solution.mesh.n_cells)])
    stab = solution.stab_energies
    return EstimatorReport(flux_terms, stab,
                           float(np.sqrt(flux_terms.sum() + stab.sum())))


def exact_projected_error(solution: primal.PrimalSolution, exact_grad,
                          singular_point=None, quad_boost: int = 0) -> float:
    """|u - Pi grad u_p|_{1, T_n} with graded quadrature on cells touching
    the singular corner."""
    total = 0.0
    mesh = solution.mesh
    for ci, elem in enumerate(solution.elements):
        verts = mesh.cell_coords(ci)
        deg = 2 * elem.degree + 8 + quad_boost
        if singular_point is not None and \
                np.min(np.hypot(*(verts - singular_point).T)) < 1e-12 * elem.h:
            rule = quadrature.graded_polygon_quadrature(verts, singular_point, deg)
        else:
            rule = quadrature.polygon_quadrature(verts, deg)
        gu = np.asarray(exact_grad(rule.points))
        gp = elem.space.eval_poly_grad(solution.pinabla_coeffs[ci], rule.points)
        diff = gu - gp
        total += float(np.dot(rule.weights, (diff * diff).sum(axis=1)))
    return float(np.sqrt(total))


def with_error(report: EstimatorReport, error: float) -> EstimatorReport:
    report.error = error
    report.efficiency = report.eta / error if error > 0 else None
    return report


def mark(eta_cells: np.ndarray, theta: float = 0.75) -> set[int]:
    """Average marking: cells whose estimator exceeds theta times the mean."""
    avg = float(eta_cells.mean())
    return {int(ci) for ci in np.nonzero(eta_cells > theta * avg)[0]}


@dataclass
class AdaptState:
    mesh: meshmod.PolygonalMesh
    degrees: np.ndarray
    eta_pred: np.ndarray
    iteration: int = 0


def hp_decide_and_refine(state: AdaptState, marked: set[int],
                         eta_cells: np.ndarray, *, pure_h: bool = False,
                         gamma_p: float = 0.4, gamma_h: float = 2.0,
                         gamma_n: float = 1.0, p_max: int = 8) -> AdaptState:
    """Melenk-Wohlmuth step: marked cells p-refine when the estimator fell
    below its prediction (else h-refine); predictions are updated for
    children and damped on untouched cells."""
    mesh = state.mesh
    split: set[int] = set()
    p_next = state.degrees.copy()
    pred_next = state.eta_pred.copy()
    for ci in marked:
        p_here = int(state.degrees[ci])
        if not pure_h and eta_cells[ci] <= state.eta_pred[ci] and p_here < p_max:
            p_next[ci] = p_here + 1
            pred_next[ci] = gamma_p * eta_cells[ci]
        else:
            split.add(ci)
    for ci in range(mesh.n_cells):
        if ci not in marked:
            pred_next[ci] = gamma_n * state.eta_pred[ci]

    if not split:
        return AdaptState(mesh, p_next, pred_next, state.iteration + 1)
    new_mesh = meshmod.refine(mesh, split)
    n_children = np.zeros(mesh.n_cells, dtype=int)
    for parent in new_mesh.parent_cells:
        n_children[parent] += 1
    deg = np.empty(new_mesh.n_cells, dtype=int)
    pred = np.empty(new_mesh.n_cells)
    for ci, parent in enumerate(new_mesh.parent_cells):
        deg[ci] = p_next[parent]
        if parent in split:
            p_here = int(state.degrees[parent])
            pred[ci] = gamma_h * 2.0 ** (-p_here) * eta_cells[parent] \
                / np.sqrt(n_children[parent])
        else:
            pred[ci] = pred_next[parent]
    return AdaptState(new_mesh, deg, pred, state.iteration + 1)


@dataclass
class AdaptiveRun:
    history: list[dict] = field(default_factory=list)
    state: AdaptState | None = None
    stopped_by: str = "budget"


def run_adaptive(problem: Problem, initial_mesh: meshmod.PolygonalMesh,
                 p: int = 1, mode: str = "hp-adaptive",
                 estimator: str = "both", theta: float = 0.75,
                 gamma_p: float = 0.4, gamma_h: float = 2.0,
                 gamma_n: float = 1.0, p_max: int = 8,
                 dof_budget: int = 50_000, eta_tolerance: float = 0.0,
                 error_tolerance: float = 0.0, max_iterations: int = 60,
                 stabilization: str = "dofi", quad_boost: int = 0,
                 snapshot_hook=None) -> AdaptiveRun:
    """SOLVE -> ESTIMATE -> MARK -> REFINE until a budget or tolerance hit.

    mode: "fixed" (single solve), "uniform-h" (refine every cell),
    "h-adaptive" (marked cells always split), "hp-adaptive".
    """
    state = AdaptState(initial_mesh, np.full(initial_mesh.n_cells, p, dtype=int),
                       np.zeros(initial_mesh.n_cells))
    run = AdaptiveRun()
    cache: dict = {}
    while True:
        t0 = time.perf_counter()
        sol = primal.assemble_and_solve(state.mesh, state.degrees,
                                        f=problem.f, dirichlet=problem.dirichlet,
                                        stabilization=stabilization)
        t_solve = time.perf_counter() - t0
        t0 = time.perf_counter()
        cache = {}
        res = fluxmod.compute_residuals(sol)
        rep_g = rep_l = None
        if estimator in ("global", "both"):
            rep_g = estimate_global(sol, fluxmod.global_reconstruct(res, cache=cache))
        if estimator in ("local", "both"):
            sflux, _ = fluxmod.reconstruct_all_local(res, cache=cache)
            rep_l = estimate_local(sol, sflux)
        error = None
        if problem.exact_grad is not None:
            error = exact_projected_error(sol, problem.exact_grad,
                                          problem.singular_point, quad_boost)
        t_estimate = time.perf_counter() - t0

        driving = rep_l if rep_l is not None else rep_g
        eta = rep_g.eta if rep_g is not None else float("nan")
        eta_loc = rep_l.eta if rep_l is not None else float("nan")
        row = {
            "iter": state.iteration,
            "ncells": state.mesh.n_cells,
            "ndofs": sol.n_dofs,
            "pmin": int(state.degrees.min()),
            "pmax": int(state.degrees.max()),
            "error": error if error is not None else float("nan"),
            "eta": eta,
            "eta_loc": eta_loc,
            "I": (eta / error) if error else float("nan"),
            "I_loc": (eta_loc / error) if error else float("nan"),
            "t_solve": t_solve,
            "t_estimate": t_estimate,
        }
        run.history.append(row)
        run.state = state
        if snapshot_hook is not None:
            snapshot_hook(state, sol, row)

        if mode == "fixed":
            run.stopped_by = "fixed"
            return run
        if eta_tolerance > 0 and driving.eta < eta_tolerance:
            run.stopped_by = "eta_tolerance"
            return run
        if error_tolerance > 0 and error is not None and error < error_tolerance:
            run.stopped_by = "error_tolerance"
            return run
        if sol.n_dofs > dof_budget:
            run.stopped_by = "budget"
            return run
        if state.iteration + 1 >= max_iterations:
            run.stopped_by = "max_iterations"
            return run

        if mode == "uniform-h":
            marked = set(range(state.mesh.n_cells))
        else:
            marked = mark(driving.eta_cells, theta)
            if not marked:
                run.stopped_by = "no_marks"
                return run
        state = hp_decide_and_refine(
            state, marked, driving.eta_cells,
            pure_h=(mode in ("h-adaptive", "uniform-h")),
            gamma_p=gamma_p, gamma_h=gamma_h, gamma_n=gamma_n, p_max=p_max)
