"""Command-line interface: adaptive/fixed experiment runs with CSV/JSON
output, self-verification suites, and mesh generation."""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, adapt, mesh as meshmod, problems, verify
from .primal import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CSV_COLUMNS = ("iter", "ncells", "ndofs", "pmin", "pmax", "error", "eta",
               "eta_loc", "I", "I_loc", "t_solve", "t_estimate")
_INT_COLUMNS = {"iter", "ncells", "ndofs", "pmin", "pmax"}
_TIME_COLUMNS = {"t_solve", "t_estimate"}

ESTIMATORS = ("global", "local", "both")
MODES = ("fixed", "h-adaptive", "hp-adaptive", "uniform-h")
STABILIZATIONS = ("dofi", "boundary")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Every knob of one experiment; defaults are the benchmark settings."""

    problem: str = "lshape-r23"
    mesh: str = ""                 # mesh source override; problem default if empty
    p: int = 1
    p_sweep: str = ""              # "lo:hi" runs one experiment per degree
    estimator: str = "both"
    mode: str = "hp-adaptive"
    theta: float = 0.75
    gamma_p: float = 0.4
    gamma_h: float = 2.0
    gamma_n: float = 1.0
    p_max: int = 8
    dof_budget: int = 50_000
    eta_tolerance: float = 0.0
    error_tolerance: float = 0.0
    max_iterations: int = 60
    quad_boost: int = 0
    stabilization: str = "dofi"
    output: str = "."
    seed: int = 0
    snapshots: bool = False
    threads: int = 0               # 0 = leave BLAS pools alone
    dump_system: str = ""          # Matrix Market dump of the global saddle system

    def validate(self) -> None:
        if not (1 <= self.p <= self.p_max <= 10):
            raise ConfigError(f"need 1 <= p <= p_max <= 10, got p={self.p}, "
                              f"p_max={self.p_max}")
        if self.theta <= 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")
        if self.dof_budget < 1:
            raise ConfigError("dof_budget must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.stabilization not in STABILIZATIONS:
            raise ConfigError(f"stabilization must be one of {STABILIZATIONS}")
        if self.p_sweep:
            self.sweep_range()

    def sweep_range(self) -> range:
        try:
            lo, hi = (int(s) for s in self.p_sweep.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad p_sweep {self.p_sweep!r}; "
                              "expected lo:hi") from exc
        if not (1 <= lo <= hi <= self.p_max):
            raise ConfigError(f"p_sweep {self.p_sweep!r} outside "
                              f"1..p_max={self.p_max}")
        return range(lo, hi + 1)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Flat key=value config file, then flag overrides on top."""
    values: dict = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    casts = {"int": int, "float": float, "str": str,
             "bool": lambda s: s.lower() in ("1", "true", "yes", "on")}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            values[key] = casts[types[key]](val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _format_cell(col: str, val) -> str:
    if col in _INT_COLUMNS:
        return str(int(val))
    if col in _TIME_COLUMNS:
        return f"{float(val):.6f}"
    return f"{float(val):.10e}"


def write_results(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(c, row[c]) for c in CSV_COLUMNS)
                     + "\n")


def _thread_cap(n: int):
    if n <= 0:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=n)
    except ImportError:
        return contextlib.nullcontext()


def _run_one(cfg: RunConfig, p: int, outdir: Path) -> adapt.AdaptiveRun:
    prob = problems.get_problem(cfg.problem)
    mesh = problems.initial_mesh(prob, cfg.mesh or None)
    hook = None
    if cfg.snapshots:
        def hook(state, sol, row):
            name = f"mesh_p{p}_iter{state.iteration:03d}.json"
            (outdir / name).write_text(state.mesh.to_json())
    return adapt.run_adaptive(
        prob, mesh, p=p, mode=cfg.mode, estimator=cfg.estimator,
        theta=cfg.theta, gamma_p=cfg.gamma_p, gamma_h=cfg.gamma_h,
        gamma_n=cfg.gamma_n, p_max=cfg.p_max, dof_budget=cfg.dof_budget,
        eta_tolerance=cfg.eta_tolerance,
        error_tolerance=cfg.error_tolerance,
        max_iterations=cfg.max_iterations,
        stabilization=cfg.stabilization, quad_boost=cfg.quad_boost,
        snapshot_hook=hook)


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {name: getattr(args, name, None)
                 for name in (f.name for f in fields(RunConfig))}
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    degrees = list(cfg.sweep_range()) if cfg.p_sweep else [cfg.p]
    rows: list[dict] = []
    stopped = []
    try:
        with _thread_cap(cfg.threads):
            for p in degrees:
                run = _run_one(cfg, p, outdir)
                rows.extend(run.history)
                stopped.append(run.stopped_by)
                if cfg.dump_system:
                    _dump_saddle(cfg, run, p)
    except SolverError as exc:
        write_results(rows, outdir / "results.csv")
        print(f"numerical failure: {exc} "
              f"(partial results in {outdir / 'results.csv'})",
              file=sys.stderr)
        return EXIT_NUMERICAL
    write_results(rows, outdir / "results.csv")
    summary = {
        "version": __version__,
        "config": asdict(cfg),
        "degrees": degrees,
        "rows": len(rows),
        "stopped_by": stopped,
        "final": {c: rows[-1][c] for c in CSV_COLUMNS} if rows else None,
    }
    (outdir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} rows to {outdir / 'results.csv'}")
    return EXIT_OK


def _dump_saddle(cfg: RunConfig, run: adapt.AdaptiveRun, p: int) -> None:
    """Re-assemble the final global saddle system and dump it (debugging)."""
    from . import flux as fluxmod, primal
    prob = problems.get_problem(cfg.problem)
    state = run.state
    sol = primal.assemble_and_solve(state.mesh, state.degrees, f=prob.f,
                                    dirichlet=prob.dirichlet,
                                    stabilization=cfg.stabilization)
    res = fluxmod.compute_residuals(sol)
    path = cfg.dump_system
    if len(cfg.p_sweep.split(":")) == 2 and cfg.p_sweep:
        path = f"{path}.p{p}"
    fluxmod.global_reconstruct(res, dump_path=path)


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        print(f"suite: {name}")
        try:
            checks = verify.run_suite(name)
        except KeyError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for c in checks:
            tag = "PASS" if c.passed else "FAIL"
            print(f"  {tag}  {c.name}: {c.value:.3e} ({c.bound})")
            failed += not c.passed
    print(f"{'all checks passed' if not failed else f'{failed} check(s) FAILED'}")
    return EXIT_OK if not failed else 1


def cmd_mesh_gen(args: argparse.Namespace) -> int:
    try:
        mesh = meshmod.load_mesh(args.spec)
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = meshmod.validate(mesh, gamma=0.01, gamma_tilde=100.0)
    text = mesh.to_json()
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {mesh.n_cells} cells / {len(mesh.vertices)} vertices "
              f"to {args.output} (validation "
              f"{'passed' if report.passed else 'FAILED'})")
    else:
        print(text)
    return EXIT_OK if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hpvem",
        description="hp-adaptive virtual element Poisson solver with "
                    "equilibrated-flux error estimators")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment, write results.csv "
                                     "and summary.json")
    run.add_argument("--config", help="key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            run.add_argument(flag, action="store_const", const=True,
                             default=None)
        else:
            run.add_argument(flag, type={"int": int, "float": float,
                                         "str": str}[f.type], default=None)
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run a self-check suite")
    ver.add_argument("suite", choices=sorted(verify.SUITES) + ["all"])
    ver.set_defaults(func=cmd_verify)

    gen = sub.add_parser("mesh-gen", help="generate a builtin mesh as JSON")
    gen.add_argument("spec", help='mesh spec, e.g. "lshape(4)" or "square(8)"')
    gen.add_argument("-o", "--output", help="output path (default: stdout)")
    gen.set_defaults(func=cmd_mesh_gen)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
