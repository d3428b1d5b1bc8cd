"""Command-line entry point ``orbsde``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .. import switching
from ..errors import InvalidArgumentError, OrbsdeError, ParseError
from ..model import validate_problem
from ..scheme import inputs_from_problem, solve_generic
from ..weights import check_moments
from .export import export, to_jsonable, write_csv
from .config import ConfigError, catalog, load_config
from .convergence import run_convergence, run_perturbation, run_refinement

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _start(text):
    parts = _int_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--start takes 'i,j' (time index, 1-based mode)")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbsde", description="Reflected BSDE / optimal switching solver.")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="config file, or the name of a bundled config")
        s.add_argument("--out", help="output file (.csv or .json)")
        return s

    cmd("validate", "model and weight reports")
    s = cmd("solve", "solve and print the summary")
    s.add_argument("--n", type=int, help="override the number of time steps")
    s.add_argument("--csv", help="write per-date aggregates to this CSV file")
    s = cmd("oracle", "Snell-envelope check on the lattice")
    s.add_argument("--start", type=_start, default=(0, 1))
    s.add_argument("--sample", type=int, default=1000)
    s = cmd("strategy", "extract and export the optimal strategy")
    s.add_argument("--start", type=_start, required=True)
    s = cmd("converge", "convergence table over n")
    s.add_argument("--n", type=_int_list, required=True)
    s.add_argument("--gamma", type=float, default=0.5)
    s.add_argument("--reference", choices=["finest", "closed_form"], default="finest")
    s.add_argument("--strides", type=_int_list,
                   help="instead: fix n and refine the reflection stride")
    s.add_argument("--z-error", action="store_true",
                   help="add the Z error aggregate (regression, finest reference)")
    s = cmd("perturb", "driver perturbation experiment")
    s.add_argument("--zeta", type=_float_list, default=[0.01])
    return p


def _load(args):
    name = args.config
    if not name.endswith(".json") and not name.lstrip().startswith("{"):
        known = catalog()
        if name not in known:
            raise UsageError(f"unknown config {name!r}; bundled: {', '.join(sorted(known))}")
        name = str(known[name])
    cfg = load_config(name)
    if args.seed is not None:
        cfg = cfg.with_overrides(scenario={"seed": args.seed})
    return cfg


def _emit(obj, out, stdout, fmt_default="json"):
    if out:
        export(obj, out)
        return
    if fmt_default == "csv":
        write_csv(obj, stdout)
    else:
        payload = obj.summary() if hasattr(obj, "summary") else obj
        stdout.write(json.dumps(to_jsonable(payload), indent=2) + "\n")


def _setup(cfg, n=None):
    grid = cfg.grid(n)
    scenario = cfg.scenario(grid)
    weights = cfg.weights(scenario)
    backend = cfg.backend(scenario)
    inputs = inputs_from_problem(cfg.problem, scenario)
    s = cfg.solver
    sol = solve_generic(inputs, scenario, weights, backend, s["tol"], s["max_iter"])
    return scenario, weights, backend, inputs, sol


def _validate(cfg, args, out):
    report = validate_problem(cfg.problem, cfg.sample_points())
    scenario = cfg.scenario()
    moments = check_moments(cfg.weights(scenario), scenario,
                            lipschitz_z=cfg.problem.lipschitz_z)
    _emit({"problem": report, "weights": moments}, args.out, out)
    return EXIT_OK if report.passed and moments.passed else EXIT_INVALID


def _solve(cfg, args, out):
    _, _, _, _, sol = _setup(cfg, args.n)
    if args.csv:
        export(sol, args.csv, "csv")
    _emit(sol, args.out, out)
    return EXIT_OK


def _oracle(cfg, args, out):
    if cfg.backend_kind != "lattice":
        raise UsageError("oracle needs a lattice config")
    scenario, weights, backend, inputs, sol = _setup(cfg)
    i, j = args.start
    report = switching.snell_check(sol, inputs, scenario, weights, backend, (i, j - 1),
                                   sample=args.sample, seed=cfg.seed)
    _emit(report, args.out, out)
    return EXIT_OK if report.passed else EXIT_INVALID


def _strategy(cfg, args, out):
    scenario, _, _, _, sol = _setup(cfg)
    i, j = args.start
    if not 1 <= j <= cfg.problem.d:
        raise UsageError(f"mode must be in 1..{cfg.problem.d}")
    strat = switching.extract_optimal_strategy(sol, scenario, (i, j - 1))
    strat.validate(scenario)
    _emit(strat, args.out, out, "csv")
    return EXIT_OK


def _converge(cfg, args, out):
    if args.strides:
        n = args.n[-1] if args.n else None
        table = run_refinement(cfg, args.strides, n)
    else:
        table = run_convergence(cfg, args.n, args.gamma, args.reference,
                                z_error=args.z_error)
    _emit(table, args.out, out, "csv")
    if hasattr(table, "slope"):
        slope = "NA" if table.slope is None else f"{table.slope:.4f}"
        sys.stderr.write(f"slope: {slope}\n")
        if getattr(table, "with_z", False):
            z = "NA" if table.z_slope is None else f"{table.z_slope:.4f}"
            sys.stderr.write(f"z slope: {z}\n")
    return EXIT_OK


def _perturb(cfg, args, out):
    _emit(run_perturbation(cfg, args.zeta), args.out, out, "csv")
    return EXIT_OK


COMMANDS = {"validate": _validate, "solve": _solve, "oracle": _oracle,
            "strategy": _strategy, "converge": _converge, "perturb": _perturb}


def main(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args, stdout)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (ConfigError, ParseError) as exc:
        sys.stderr.write(f"invalid configuration: {exc}\n")
        return EXIT_INVALID
    except (OrbsdeError, InvalidArgumentError, FloatingPointError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
