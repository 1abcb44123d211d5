"""Command-line entry point: ``aonn {solve,evaluate,sweep,gradcheck} --config FILE --out DIR``.

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import (ConfigError, build_options, build_problem, build_schedule, build_specs, load_config,
                     manifest_dict, mu_slices, resolve_config)
from .driver import SolutionBundle, aonn_solve, pinn_projection_solve, pinn_solve
from .gradcheck import run_suite
from .jets import DivergenceError
from .problems import ProblemDef
from .report import format_number, load_bundle_params, relative_errors, sparsity_profile, write_outputs
from .sampling import sample_domain

__all__ = ["main", "run", "solve_config", "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGENCE", "EXIT_CHECK"]

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("aonn")


def _monitor(problem: ProblemDef, mu, resolution: int) -> Callable[[SolutionBundle], tuple[float, float]] | None:
    if problem.analytic is None:
        return None

    def monitor(bundle: SolutionBundle) -> tuple[float, float]:
        return relative_errors(bundle, problem, mu, resolution)["u"]

    return monitor


def solve_config(cfg: dict[str, dict[str, Any]]) -> tuple[ProblemDef, SolutionBundle]:
    """Run the configured method; a :class:`DivergenceError` propagates with the last good bundle."""
    problem = build_problem(cfg)
    specs = build_specs(cfg, problem)
    opts = build_options(cfg)
    s = cfg["sampling"]
    sample = sample_domain(problem.domain, s["n_points"], skip=s["skip"],
                           boundary_slice_fraction=s["boundary_slice_fraction"])
    m = cfg["method"]
    monitor = _monitor(problem, mu_slices(cfg, problem)[0], cfg["output"]["resolution"])
    if m["name"] == "aonn":
        bundle = aonn_solve(problem, sample, build_schedule(cfg), specs, seed=m["seed"], opts=opts,
                            monitor=monitor)
    elif m["name"] == "pinn":
        bundle = pinn_solve(problem, sample, specs, seed=m["seed"], weights=m.get("weights"), epochs=m["epochs"],
                            opts=opts, time_budget=m.get("time_budget"), monitor=monitor)
    else:
        c = m.get("c", 1.0 / problem.alpha)
        bundle = pinn_projection_solve(problem, sample, c, specs, seed=m["seed"], epochs=m["epochs"], opts=opts,
                                       time_budget=m.get("time_budget"), weights=m.get("weights"),
                                       monitor=monitor)
    return problem, bundle


def _cmd_solve(cfg, out: Path) -> int:
    try:
        problem, bundle = solve_config(cfg)
        code = EXIT_OK
    except DivergenceError as err:
        print(f"diverged at iteration {err.iteration}: {err}", file=sys.stderr)
        bundle = getattr(err, "bundle", None)
        if bundle is None:
            return EXIT_DIVERGENCE
        problem, code = build_problem(cfg), EXIT_DIVERGENCE
    manifest = manifest_dict(cfg, bundle.seeds, {"version": __version__, "method": bundle.method})
    write_outputs(bundle, problem, out, manifest, mu_slices(cfg, problem), cfg["output"]["resolution"],
                  cfg["output"]["wall_clock"])
    if bundle.records:
        last = bundle.records[-1]
        print(f"iterations={len(bundle.records)} err_l2={format_number(last.err_l2)} "
              f"err_linf={format_number(last.err_linf)}")
    else:
        print("iterations=0")
    return code


def _load_bundle(cfg, out: Path) -> tuple[ProblemDef, SolutionBundle]:
    problem = build_problem(cfg)
    try:
        specs, params = load_bundle_params(out)
    except (OSError, ValueError, KeyError) as err:
        raise ConfigError(f"cannot load saved networks from {out}: {err}") from err
    for spec in specs.values():
        if spec.input_dim != problem.input_dim:
            raise ConfigError(f"saved networks take {spec.input_dim} inputs, {problem.name} needs {problem.input_dim}")
    return problem, SolutionBundle(problem.name, specs, params, method=cfg["method"]["name"])


def _report(problem: ProblemDef, bundle: SolutionBundle, mus: Sequence, resolution: int) -> list[str]:
    """Error table against the closed form, or a sparsity table (mu may extrapolate) without one."""
    try:
        return _report_lines(problem, bundle, mus, resolution)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _report_lines(problem: ProblemDef, bundle: SolutionBundle, mus: Sequence, resolution: int) -> list[str]:
    if problem.analytic is not None:
        lines = ["mu,l2_u,linf_u,l2_y,linf_y,l2_p,linf_p"]
        for mu in mus:
            e = relative_errors(bundle, problem, mu, resolution)
            vals = [*e["u"], *e["y"], *e["p"]]
            lines.append(";".join(format_number(v) for v in mu) + "," + ",".join(format_number(v) for v in vals))
    else:
        lines = ["mu,support_fraction,max_abs_u"]
        profile = sparsity_profile(bundle, problem, mus, resolution=resolution, extrapolate=True)
        for mu, (frac, peak) in zip(mus, profile):
            lines.append(";".join(format_number(v) for v in mu) + f",{format_number(frac)},{format_number(peak)}")
    return lines


def _cmd_evaluate(cfg, out: Path) -> int:
    problem, bundle = _load_bundle(cfg, out)
    print("\n".join(_report(problem, bundle, mu_slices(cfg, problem), cfg["output"]["resolution"])))
    return EXIT_OK


def _sweep_mus(cfg, problem: ProblemDef) -> list[list[float]]:
    given = cfg["output"].get("sweep_mu")
    if given is not None:
        return mu_slices({"output": {"mu_slices": given}}, problem)
    if problem.param_dim == 0:
        return [[]]
    if problem.param_dim != 1:
        raise ConfigError("set [output] sweep_mu for problems with several parameters")
    lo, hi = problem.domain.param_lower[0], problem.domain.param_upper[0]
    return [[float(v)] for v in np.linspace(lo, hi, 8)]


def _cmd_sweep(cfg, out: Path) -> int:
    problem, bundle = _load_bundle(cfg, out)
    lines = _report(problem, bundle, _sweep_mus(cfg, problem), cfg["output"]["resolution"])
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_gradcheck(cfg, out: Path | None, seed: int) -> int:
    rows = run_suite(seed=seed)
    print(f"{'case':>4} {'problem':>7} {'dim':>3} {'quantity':>12} {'max_rel_dev':>12} {'tol':>8} ok")
    for r in rows:
        print(f"{r.case:>4} {r.problem:>7} {r.input_dim:>3} {r.quantity:>12} {r.max_rel_dev:12.3e} "
              f"{r.tolerance:8.0e} {'yes' if r.ok else 'NO'}")
    return EXIT_OK if all(r.ok for r in rows) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aonn", description="Adjoint-oriented neural solvers for "
                                     "parametric optimal control problems.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "train networks and write logs, field dumps and parameters"),
                           ("evaluate", "report errors of a saved solution at the configured mu slices"),
                           ("sweep", "report errors of a saved solution over a mu grid"),
                           ("gradcheck", "finite-difference check of jets and loss gradients")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, required=name != "gradcheck", help="TOML run configuration")
        p.add_argument("--out", type=Path, required=name != "gradcheck", help="output / bundle directory")
        p.add_argument("--seed", type=int, help="override [method] seed")
        p.add_argument("-v", "--verbose", action="store_true", help="log every outer iteration")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not log.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config) if args.config is not None else resolve_config({})
        if args.seed is not None:
            cfg["method"]["seed"] = args.seed
        if args.command == "solve":
            return _cmd_solve(cfg, args.out)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg, args.out)
        if args.command == "sweep":
            return _cmd_sweep(cfg, args.out)
        return _cmd_gradcheck(cfg, args.out, cfg["method"]["seed"])
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE


def main() -> None:
    sys.exit(run())
