"""Acceptance gate: the eight headline criteria, one printed pass/fail line
each (emitted with capture disabled so they always show in the log)."""

import time

import numpy as np
import pytest

from hpvem import adapt, mesh as meshmod, problems, verify

# efficiency indices collected from the runs of criteria 4-6, checked by
# criterion 7 (envelope 1 <= I, I_loc <= 4)
_ENVELOPE_ROWS: list[dict] = []


@pytest.fixture
def report(capsys):
    def _report(num: int, title: str, ok: bool, detail: str) -> None:
        line = (f"[{'PASS' if ok else 'FAIL'}] criterion {num} "
                f"({title}): {detail}")
        with capsys.disabled():
            print(line, flush=True)
    return _report


def _collect(rows) -> None:
    _ENVELOPE_ROWS.extend(rows)


def test_criterion_1_projector_exactness(report):
    t0 = time.perf_counter()
    checks = verify.suite_projectors(n_polygons=200, seed=0)
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and dt <= 30.0
    worst = max(c.value for c in checks)
    report(1, "projector exactness", ok,
            f"200 polygons, p=1..4, worst rel err {worst:.2e} "
            f"(tol 1e-10), {dt:.1f}s")
    assert ok, [c for c in checks if not c.passed]


def test_criterion_2_patch_tests(report):
    t0 = time.perf_counter()
    meshes = [("square(4)", meshmod.load_mesh("square(4)")),
              ("hanging", meshmod.refine(meshmod.load_mesh("square(2)"), {0}))]
    worst = 0.0
    for _, mesh in meshes:
        for p in range(1, 5):
            prob = problems.get_problem(f"patch-q{p}")
            run = adapt.run_adaptive(prob, mesh, p=p, mode="fixed",
                                     estimator="both")
            r = run.history[0]
            worst = max(worst, r["error"], r["eta"], r["eta_loc"])
    dt = time.perf_counter() - t0
    ok = worst <= 1e-7 and dt <= 30.0
    report(2, "patch tests", ok,
            f"square(4) + hanging mesh, p=1..4, max of error/eta/eta_loc "
            f"{worst:.2e} (tol 1e-7), {dt:.1f}s")
    assert ok


def test_criterion_3_equilibration(report):
    t0 = time.perf_counter()
    checks = verify.suite_equilibration()
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and dt <= 120.0
    detail = ", ".join(f"{c.name}={c.value:.1e}" for c in checks)
    report(3, "equilibration", ok, f"{detail}, {dt:.1f}s")
    assert ok, [c for c in checks if not c.passed]


def test_criterion_4_efficiency_plateau(report):
    t0 = time.perf_counter()
    rows = verify.benchmark_sweep()
    _collect(rows)
    dt = time.perf_counter() - t0
    eff = [r["I"] for r in rows]
    eff_loc = [r["I_loc"] for r in rows]
    ok = (all(1.5 <= v <= 3.5 for v in eff)
          and all(0.7 * 2.3 <= v <= 1.3 * 2.3 for v in eff[2:])
          and all(1.0 <= v <= 2.0 for v in eff_loc)
          and all(0.7 * 1.3 <= v <= 1.3 * 1.3 for v in eff_loc[2:])
          and dt <= 300.0)
    report(4, "efficiency plateau", ok,
            "I=" + "/".join(f"{v:.2f}" for v in eff)
            + " I_loc=" + "/".join(f"{v:.2f}" for v in eff_loc)
            + f" for p=1..5, {dt:.1f}s")
    assert ok


def test_criterion_5_h_version_rate(report):
    t0 = time.perf_counter()
    run = adapt.run_adaptive(problems.get_problem("lshape-r23"),
                             meshmod.load_mesh("lshape(2)"), p=1,
                             mode="uniform-h", estimator="both",
                             max_iterations=4, dof_budget=10**9)
    _collect(run.history)
    dt = time.perf_counter() - t0
    slope = float(np.polyfit(np.log([r["ndofs"] for r in run.history]),
                             np.log([r["error"] for r in run.history]), 1)[0])
    ok = abs(slope - (-1.0 / 3.0)) <= 0.05 and dt <= 120.0
    report(5, "h-version rate", ok,
            f"4 uniform levels, p=1: slope {slope:.3f} "
            f"(target -1/3 +- 0.05), {dt:.1f}s")
    assert ok


def test_criterion_6_hp_dominance(report):
    t0 = time.perf_counter()
    prob = problems.get_problem("lshape-r23")
    hp = adapt.run_adaptive(prob, meshmod.load_mesh("lshape(2)"), p=1,
                            mode="hp-adaptive", estimator="both",
                            error_tolerance=1e-3, dof_budget=10**9,
                            max_iterations=60)
    _collect(hp.history)
    assert hp.stopped_by == "error_tolerance"
    n_hp = hp.history[-1]["ndofs"]

    # each pure-h competitor is run only until it either reaches the target
    # error or provably needs more than 5x the hp DOF count
    best_h = np.inf
    for p in (1, 2, 3):
        run = adapt.run_adaptive(prob, meshmod.load_mesh("lshape(2)"), p=p,
                                 mode="h-adaptive", estimator="both",
                                 error_tolerance=1e-3, dof_budget=5 * n_hp,
                                 max_iterations=80)
        _collect(run.history)
        if run.stopped_by == "error_tolerance":
            best_h = min(best_h, run.history[-1]["ndofs"])
    x = np.sqrt([r["ndofs"] for r in hp.history])
    y = np.log([r["error"] for r in hp.history])
    resid = y - np.polyval(np.polyfit(x, y, 1), x)
    r2 = 1.0 - resid.var() / y.var()
    dt = time.perf_counter() - t0
    ok = n_hp <= best_h / 5.0 and r2 >= 0.95 and dt <= 600.0
    best_str = f"{best_h:.0f}" if np.isfinite(best_h) else f"> {5 * n_hp}"
    report(6, "hp dominance", ok,
            f"hp reaches 1e-3 with {n_hp} DOFs vs best pure-h {best_str}; "
            f"exp-fit R^2 {r2:.3f}, {dt:.1f}s")
    assert ok


def test_criterion_7_efficiency_envelopes(report):
    assert _ENVELOPE_ROWS, "criteria 4-6 must run first"
    vals = []
    for row in _ENVELOPE_ROWS:
        for key in ("I", "I_loc"):
            if np.isfinite(row[key]):
                vals.append(row[key])
    lo, hi = min(vals), max(vals)
    ok = 1.0 <= lo and hi <= 4.0
    report(7, "reliability/efficiency envelopes", ok,
            f"{len(vals)} indices across criteria 4-6 runs in "
            f"[{lo:.2f}, {hi:.2f}] (required [1, 4])")
    assert ok


def test_criterion_8_stabilization_spot_checks(report):
    t0 = time.perf_counter()
    checks = verify.suite_stabilization()
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and dt <= 60.0
    detail = ", ".join(f"{c.name}={c.value:.2e}" for c in checks)
    report(8, "stabilization spot-checks", ok, f"{detail}, {dt:.1f}s")
    assert ok
