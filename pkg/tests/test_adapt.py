import numpy as np
import pytest

from hpvem import adapt, mesh as meshmod, problems
from hpvem.adapt import AdaptState, hp_decide_and_refine, mark


def test_mark_average_strategy():
    eta = np.array([1.0, 1.0, 1.0, 5.0])
    assert mark(eta, theta=0.75) == {3}
    assert mark(eta, theta=0.4) == {0, 1, 2, 3}


def test_hp_decision_p_refine_when_predicted(lshape12):
    degrees = np.full(12, 2)
    eta_cells = np.full(12, 1.0)
    pred = np.full(12, 2.0)  # estimator fell below prediction everywhere
    state = AdaptState(lshape12, degrees, pred)
    nxt = hp_decide_and_refine(state, {3}, eta_cells, gamma_p=0.4)
    assert nxt.mesh is lshape12          # no split happened
    assert nxt.degrees[3] == 3
    assert np.isclose(nxt.eta_pred[3], 0.4 * 1.0)
    # unmarked predictions damped by gamma_n (default 1: unchanged)
    assert np.isclose(nxt.eta_pred[0], 2.0)


def test_hp_decision_h_refine_when_missed(lshape12):
    degrees = np.full(12, 2)
    eta_cells = np.full(12, 1.0)
    pred = np.zeros(12)                  # prediction missed everywhere
    state = AdaptState(lshape12, degrees, pred)
    nxt = hp_decide_and_refine(state, {3}, eta_cells, gamma_h=2.0)
    assert nxt.mesh.n_cells == 12 - 1 + 4
    for ci, parent in enumerate(nxt.mesh.parent_cells):
        assert nxt.degrees[ci] == 2
        if parent == 3:
            assert np.isclose(nxt.eta_pred[ci],
                              2.0 * 2.0 ** (-2) * 1.0 / np.sqrt(4))


def test_hp_respects_p_max(lshape12):
    state = AdaptState(lshape12, np.full(12, 3), np.full(12, 10.0))
    nxt = hp_decide_and_refine(state, {0}, np.ones(12), p_max=3)
    # cannot p-refine past p_max: falls back to splitting
    assert nxt.mesh.n_cells > 12


def test_pure_h_never_raises_degree(lshape12):
    state = AdaptState(lshape12, np.full(12, 2), np.full(12, 10.0))
    nxt = hp_decide_and_refine(state, {0, 1}, np.ones(12), pure_h=True)
    assert nxt.degrees.max() == 2
    assert nxt.mesh.n_cells == 12 - 2 + 8


def test_run_adaptive_history_schema(lshape12):
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"), lshape12,
                             p=1, mode="fixed", estimator="both")
    row = run.history[0]
    assert list(row) == ["iter", "ncells", "ndofs", "pmin", "pmax", "error",
                         "eta", "eta_loc", "I", "I_loc", "t_solve",
                         "t_estimate"]
    assert run.stopped_by == "fixed"
    assert row["I"] > 1.0 and row["I_loc"] > 1.0


def test_run_adaptive_stops_on_error_tolerance(lshape12):
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"), lshape12,
                             p=2, mode="h-adaptive", estimator="global",
                             error_tolerance=0.1, max_iterations=20)
    assert run.stopped_by == "error_tolerance"
    assert run.history[-1]["error"] < 0.1


def test_run_adaptive_estimator_selection(lshape12):
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"), lshape12,
                             p=1, mode="fixed", estimator="global")
    assert np.isnan(run.history[0]["eta_loc"])
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"), lshape12,
                             p=1, mode="fixed", estimator="local")
    assert np.isnan(run.history[0]["eta"])


def test_uniform_h_doubles_cells(lshape12):
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"), lshape12,
                             p=1, mode="uniform-h", estimator="global",
                             max_iterations=2, dof_budget=10**9)
    assert [r["ncells"] for r in run.history] == [12, 48]


def test_estimator_report_eta_cells():
    rep = adapt.EstimatorReport(np.array([3.0, 0.0]), np.array([1.0, 4.0]),
                                eta=3.0)
    assert np.allclose(rep.eta_cells, [2.0, 2.0])
