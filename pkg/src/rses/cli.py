"""Command-line entry point: thin dispatch onto the harness.

Subcommands::

    rses run    --problem NAME --solver NAME --budget N --trials N --seed N --out PATH
                [--k INT] [--sigma REAL] [--beta REAL] [--time-cap-s REAL] [--config PATH]
    rses ablate --param {k|sigma|beta} --values LIST --out PATH
                [--trials INT] [--seed INT] [--config PATH]
    rses report --inputs PATH... --out PATH

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure in every
trial, 4 I/O error.  A JSON config file may supply any flag's value; flags
given on the command line win.
"""

import argparse
import json
import sys

from .baselines import Adam, EnsembleKalmanInversion, GaussNewton, XNES
from .benchmarks import PROBLEM_NAMES, make_problem
from .core import RSES
from . import harness

SOLVER_NAMES = ("rses", "gn", "eki", "adam", "xnes", "external")

_RUN_DEFAULTS = {"budget": 7500, "trials": 10, "seed": 0, "time_cap_s": 30.0}
_ABLATE_DEFAULTS = {"trials": 3, "seed": 0, "budget": 7500}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rses",
        description="Budget-metered benchmark harness for RSES and baseline solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solver on one benchmark problem")
    run.add_argument("--problem", required=True, choices=PROBLEM_NAMES)
    run.add_argument("--solver", required=True, choices=SOLVER_NAMES)
    run.add_argument("--budget", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True)
    run.add_argument("--k", type=int, help="RSES probe count (default: prescribed from m)")
    run.add_argument("--sigma", type=float, help="RSES probe scale")
    run.add_argument("--beta", type=float, help="RSES ridge scale")
    run.add_argument("--time-cap-s", type=float, dest="time_cap_s")
    run.add_argument("--config", help="JSON file supplying default flag values")

    ablate = sub.add_parser("ablate", help="sweep one RSES hyperparameter on deconvolution")
    ablate.add_argument("--param", required=True, choices=("k", "sigma", "beta"))
    ablate.add_argument("--values", required=True,
                        help="comma-separated positive values, e.g. 0.02,0.2,2.0")
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--trials", type=int)
    ablate.add_argument("--seed", type=int)
    ablate.add_argument("--config", help="JSON file supplying default flag values")

    report = sub.add_parser("report", help="stopping-index comparison across run outputs")
    report.add_argument("--inputs", required=True, nargs="+")
    report.add_argument("--out", required=True)
    return parser


def _apply_config(args, parser, defaults):
    """Fill unset flags from the config file, then from built-in defaults."""
    config = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as handle:
                config = json.load(handle)
        except OSError as err:
            print(f"error: cannot read config {args.config}: {err}", file=sys.stderr)
            raise SystemExit(4)
        except json.JSONDecodeError as err:
            parser.error(f"config {args.config} is not valid JSON: {err}")
        if not isinstance(config, dict):
            parser.error(f"config {args.config} must hold a JSON object")
    for key, fallback in defaults.items():
        if getattr(args, key, None) is None:
            value = config.get(key, fallback)
            setattr(args, key, value)
    for key, value in config.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _build_solver(name, args, problem, parser):
    if name == "rses":
        sigma = args.sigma
        if sigma is None:
            sigma = problem.details.get("probe_scale_hint", 0.05)
        return RSES(probe_count=args.k, probe_scale=sigma,
                    ridge_scale=args.beta if args.beta is not None else 1e-5)
    if name == "gn":
        return GaussNewton()
    if name == "eki":
        return EnsembleKalmanInversion()
    if name == "adam":
        return Adam()
    if name == "xnes":
        return XNES()
    parser.error(
        "solver 'external' is an adapter slot for third-party solvers; construct "
        "rses.ExternalSolver with an ask/tell proposer and call the harness "
        "programmatically (see README)")


def _cmd_run(args, parser):
    problem = make_problem(args.problem, args.seed)
    if args.solver == "adam" and problem.gradient is None and problem.value_and_gradient is None:
        parser.error(f"problem '{args.problem}' has no gradient; adam is unsupported there")
    solver = _build_solver(args.solver, args, problem, parser)
    results = harness.run_trials(args.problem, solver, args.trials, args.budget,
                                 args.seed, time_cap_s=args.time_cap_s)
    labeled = [(args.problem, args.solver, r.trial, r.trace) for r in results]
    try:
        harness.write_trace_csv(args.out, labeled)
    except OSError as err:
        print(f"error: cannot write {args.out}: {err}", file=sys.stderr)
        return 4
    failures = sum(1 for r in results if r.failed)
    usable = [r for r in results if r.trace is not None and r.trace.n_evaluations]
    if usable:
        agg = harness.aggregate_trials(results, args.budget,
                                       problem=args.problem, solver=args.solver)
        print(f"{args.problem}/{args.solver}: {len(usable)} trials, "
              f"mean best residual {agg.mean_best_residual[-1]:.3e}, "
              f"mean best param error {agg.mean_best_param_error[-1]:.3e}, "
              f"failures {failures}")
    if failures == len(results):
        print("error: every trial ended in numerical failure", file=sys.stderr)
        return 3
    return 0


def _cmd_ablate(args, parser):
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        parser.error(f"--values must be a comma-separated number list, got {args.values!r}")
    if not values or any(v <= 0 for v in values):
        parser.error("--values must be positive numbers")
    if args.param == "k":
        if any(v != int(v) for v in values):
            parser.error("--param k requires integer values")
        values = [int(v) for v in values]
    points = harness.ablation_sweep(args.param, values, trials=args.trials,
                                    budget=args.budget, master_seed=args.seed)
    try:
        harness.write_sweep_csv(args.out, points)
    except OSError as err:
        print(f"error: cannot write {args.out}: {err}", file=sys.stderr)
        return 4
    for p in points:
        marker = "  <- minimum" if p.is_minimum else ""
        print(f"{p.param}={p.value:g}: mean terminal residual "
              f"{p.mean_terminal_residual:.3e}{marker}")
    return 0


def _cmd_report(args, parser):
    try:
        aggregates = _load_report_inputs(args.inputs)
    except OSError as err:
        print(f"error: cannot read inputs: {err}", file=sys.stderr)
        return 4
    except ValueError as err:
        parser.error(str(err))
    reference = [a for a in aggregates if a.solver == "rses"]
    if not reference:
        parser.error("report needs an rses run among --inputs to define the stopping index")
    index = harness.stopping_index(reference[0].mean_dist)
    rows = harness.report_at_index(aggregates, index)
    try:
        harness.write_report_csv(args.out, rows)
    except OSError as err:
        print(f"error: cannot write {args.out}: {err}", file=sys.stderr)
        return 4
    print(harness.format_report_text(rows, index), end="")
    return 0


def _load_report_inputs(paths):
    """Accept trace CSVs and/or aggregate CSVs, sharing one evaluation axis."""
    trace_paths, aggregates = [], []
    for path in paths:
        with open(path, newline="") as handle:
            header = handle.readline().strip().split(",")
        if tuple(header) == harness.AGGREGATE_COLUMNS:
            aggregates.append(harness.read_aggregate_csv(path))
        elif tuple(header) == harness.TRACE_COLUMNS:
            trace_paths.append(path)
        else:
            raise ValueError(f"{path}: not a trace or aggregate CSV")
    if trace_paths:
        aggregates.extend(harness.aggregates_from_trace_files(trace_paths))
    return aggregates


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            _apply_config(args, parser, _RUN_DEFAULTS)
            return _cmd_run(args, parser)
        if args.command == "ablate":
            _apply_config(args, parser, _ABLATE_DEFAULTS)
            return _cmd_ablate(args, parser)
        return _cmd_report(args, parser)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
