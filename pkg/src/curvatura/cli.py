"""Batch front end: ``curvatura solve|check|verify``.

Exit codes: 0 success, 2 hypothesis refusal or failed check, 3 continuation
failure, 4 configuration / input error.

A config is one JSON document::

    {"k": 2, "R1": 0.5, "R2": 2.0, "Rbar": 1.0, "epsilon": 1.0,
     "psi": "cosh(1)^2 / sinh(rho)^2",
     "grid": {"n_theta": 32, "n_phi": 64},
     "solver": {"newton_tol": 1e-10},
     "force": false}
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hypergeom import curvature_field
from .psi_lang import ExprError, ParseError, ProblemSpec, check_hypotheses
from .solver import (ContinuationFailure, HypothesisRefusal, SolverConfig, SolverError,
                     continuation_run, residual)
from .sphere_grid import GridError, build_grid
from . import verify as vf

log = logging.getLogger("curvatura")

EXIT_OK, EXIT_FAIL, EXIT_CONTINUATION, EXIT_CONFIG = 0, 2, 3, 4

SOLUTION_COLUMNS = ("theta", "phi", "z", "lambda_1", "lambda_2", "f", "residual")
TRACE_COLUMNS = ("t", "newton_iterations", "residual_norm", "min_z", "max_z",
                 "max_grad", "max_lambda1")
SUITES = ("lemma1", "codazzi", "gauss", "symfunc")
# graphs used by the identity suites: axisymmetric, pole-crossing, round
DEFAULT_GRAPHS = ("1 + 0.1*z", "1 + 0.1*x", "1.3")

_REQUIRED = ("k", "R1", "R2", "Rbar", "psi")
_OPTIONAL = ("epsilon", "grid", "solver", "force", "description")


class ConfigError(ValueError):
    pass


def _num(x):
    """Float formatted with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _dump(path, doc):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    spec: ProblemSpec
    grid: object
    solver: SolverConfig
    force: bool
    echo: dict


def load_config(path):
    """Read and validate a config file; raises ConfigError."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw)


def parse_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing config keys: {missing}")
    unknown = sorted(set(raw) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    gdef = raw.get("grid", {}) or {}
    try:
        spec = ProblemSpec(int(raw["k"]), float(raw["R1"]), float(raw["R2"]), float(raw["Rbar"]),
                           str(raw["psi"]), float(raw.get("epsilon", 1.0)))
        grid = build_grid(int(gdef.get("n_theta", 32)), int(gdef.get("n_phi", 64)))
        solver = SolverConfig.from_dict(raw.get("solver", {}))
    except ParseError as exc:
        raise ConfigError(f"psi: {exc}") from None
    except (ValueError, TypeError, GridError, ExprError) as exc:
        raise ConfigError(str(exc)) from None
    force = raw.get("force", False)
    if not isinstance(force, bool):
        raise ConfigError("force must be true or false")
    echo = {"k": spec.k, "R1": spec.R1, "R2": spec.R2, "Rbar": spec.Rbar,
            "epsilon": spec.epsilon, "psi": spec.source,
            "grid": {"n_theta": grid.n_theta, "n_phi": grid.n_phi},
            "solver": solver.to_dict(), "force": force}
    if "description" in raw:
        echo["description"] = raw["description"]
    return RunConfig(spec, grid, solver, force, echo)


# ---------------------------------------------------------------- reports


@dataclass
class RunReport:
    config: dict
    hypotheses: dict = None
    history: list = field(default_factory=list)
    final_residual: float = None
    monitor: dict = None
    timings: dict = field(default_factory=dict)
    exit_status: int = None
    message: str = ""

    def to_dict(self):
        return asdict(self)


def _state_summary(state):
    history = [{"t": h.t, "newton_iterations": h.newton_iterations,
                "residual_norm": h.residual_norm} for h in state.history]
    mon = vf.monitor_bounds(state, math.inf)
    summary = mon.to_dict()
    summary["C0"] = None
    summary["min_z"] = min(m.min_z for m in state.monitors)
    summary["max_z"] = max(m.max_z for m in state.monitors)
    return history, summary


def write_solution_csv(path, state, spec, grid):
    z = state.z.z
    cd = curvature_field(z, grid, spec.k)
    G = residual(z, state.t, spec, grid)
    th, ph = grid.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOLUTION_COLUMNS)
        for j, m in np.ndindex(grid.shape):
            w.writerow([_num(th[j, m]), _num(ph[j, m]), _num(z[j, m]), _num(cd.lam[j, m, 0]),
                        _num(cd.lam[j, m, 1]), _num(cd.f[j, m]), _num(G[j, m])])


def write_trace_csv(path, state):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for h, m in zip(state.history, state.monitors):
            w.writerow([_num(h.t), h.newton_iterations, _num(h.residual_norm), _num(m.min_z),
                        _num(m.max_z), _num(m.max_grad), _num(m.max_lambda1)])


# ---------------------------------------------------------------- commands


def run_solve(config_path, out=".", force=False):
    """Solve the configured problem; writes solution.csv, report.json, monitor.csv."""
    out = Path(out)
    t0 = time.perf_counter()
    try:
        rc = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    force = force or rc.force
    rc.echo["force"] = force
    report = RunReport(rc.echo)
    report.timings["load"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    state = None
    try:
        state = continuation_run(rc.spec, rc.grid, rc.solver, force=force)
        report.exit_status = EXIT_OK
        report.message = "converged"
    except HypothesisRefusal as exc:
        report.hypotheses = exc.report.to_dict()
        report.exit_status = EXIT_FAIL
        report.message = str(exc)
        for v in exc.report.violations:
            print(f"violation: {v['condition']} at node {v['node']} rho={v['rho']:.6g}",
                  file=sys.stderr)
    except ContinuationFailure as exc:
        state = exc.state
        report.exit_status = EXIT_CONTINUATION
        report.message = str(exc)
    except (SolverError, ArithmeticError, ExprError) as exc:
        report.exit_status = EXIT_CONTINUATION
        report.message = f"{type(exc).__name__}: {exc}"
    report.timings["solve"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    if state is not None:
        report.hypotheses = state.hypotheses.to_dict()
        report.history, report.monitor = _state_summary(state)
        report.final_residual = state.residual_norm
        write_trace_csv(out / "monitor.csv", state)
        if report.exit_status == EXIT_OK:
            write_solution_csv(out / "solution.csv", state, rc.spec, rc.grid)
    report.timings["write"] = time.perf_counter() - t2
    _dump(out / "report.json", report.to_dict())
    if report.exit_status != EXIT_OK:
        print(f"solve failed: {report.message}", file=sys.stderr)
    else:
        print(f"converged: {len(report.history) - 1} steps, residual {report.final_residual:.3e}")
    return report.exit_status


def run_check(config_path, out="."):
    """Check the hypotheses on psi only; writes hypotheses.json."""
    try:
        rc = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = check_hypotheses(rc.spec, rc.grid)
    except ExprError as exc:
        print(f"cannot evaluate psi: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config": rc.echo, "hypotheses": rep.to_dict()}
    _dump(out / "hypotheses.json", doc)
    print(f"barrier inner margin {rep.inner_margin:.6g}, outer margin {rep.outer_margin:.6g}, "
          f"max d/drho(psi sinh^k) {rep.monotonicity_margin:.6g}")
    for v in rep.violations:
        print(f"violation: {v['condition']} at node {v['node']} rho={v['rho']:.6g}",
              file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _parse_grids(text):
    try:
        grids = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad grid list {text!r}") from None
    if not grids:
        raise ConfigError("empty grid list")
    for n in grids:
        build_grid(n, 2 * n)
    return grids


def run_verify(suite, grids="16,32,64", out=".", seed=0, graphs=DEFAULT_GRAPHS):
    """Run a verification suite; writes verify_<suite>.json."""
    if suite not in SUITES + ("all",):
        print(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        glist = _parse_grids(grids) if isinstance(grids, str) else list(grids)
    except (ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    names = SUITES if suite == "all" else (suite,)
    doc = {"suite": suite, "grids": glist, "seed": seed, "results": {}}
    ok = True
    for name in names:
        if name == "symfunc":
            res = vf.symfunc_suite(seed)
            doc["results"][name] = res
            for key, r in res.items():
                print(f"{name:8s} {key:14s} worst {r['worst']:.3e}  {'pass' if r['passed'] else 'FAIL'}")
                ok &= bool(r["passed"])
            continue
        reports = []
        for g in graphs:
            zdef = float(g) if _is_number(g) else g
            try:
                vf.sample_graph(zdef, build_grid(8, 16))
            except ValueError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            if name == "lemma1":
                reps = vf.check_lemma1(zdef, glist)
            elif name == "codazzi":
                reps = (vf.check_codazzi(zdef, glist),)
            else:
                reps = (vf.check_gauss(zdef, glist),)
            for r in reps:
                d = r.to_dict()
                d["graph"] = g
                reports.append(d)
                _print_order_row(g, r)
                ok &= bool(r.passed)
        doc["results"][name] = reports
    doc["passed"] = ok
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / f"verify_{suite}.json", doc)
    return EXIT_OK if ok else EXIT_FAIL


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _print_order_row(graph, r):
    res = " ".join(f"{x:.2e}" for x in r.residuals)
    order = "exact" if r.exact else ("-" if r.order is None else f"{r.order:.2f}")
    print(f"{r.name:20s} {graph:12s} {res}  order {order} (>= {r.declared_order - 0.3:.1f})"
          f"  {'pass' if r.passed else 'FAIL'}")


# ---------------------------------------------------------------- entry point


def _thread_limit():
    n = os.environ.get("CURVATURA_THREADS")
    if not n:
        return nullcontext()
    try:
        n = int(n)
    except ValueError:
        log.warning("ignoring CURVATURA_THREADS=%r", n)
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(n, 1))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized suites")
    common.add_argument("--force", action="store_true", help="solve even if hypotheses fail")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="curvatura", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run the continuation solver")
    s.add_argument("config")
    c = sub.add_parser("check", parents=[common], help="check hypotheses on psi")
    c.add_argument("config")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", help="lemma1, codazzi, gauss, symfunc or all")
    v.add_argument("--grids", default="16,32,64", help="comma-separated n_theta values")
    v.add_argument("--graph", action="append", help="graph expression in x, y, z (repeatable)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    with _thread_limit():
        if args.command == "solve":
            return run_solve(args.config, args.out, args.force)
        if args.command == "check":
            return run_check(args.config, args.out)
        graphs = tuple(args.graph) if args.graph else DEFAULT_GRAPHS
        return run_verify(args.suite, args.grids, args.out, args.seed, graphs)


if __name__ == "__main__":
    sys.exit(main())
