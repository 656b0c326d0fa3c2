"""Budget-metered multi-trial experiment runner.

Implements the comparison protocol: every solver gets the same evaluation
budget and wall-clock cap, trials are seeded independently from one master
seed, traces are aggregated on a shared evaluation axis, all solvers are
reported at the stopping index where the mean RSES distance first comes
within 1% of its minimum, and everything is emitted as CSV.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .benchmarks import make_problem
from .core import RSES
from .metering import EvaluationMeter, NumericalFailure
from .rng import derive_seed

TRACE_COLUMNS = ("problem", "solver", "trial", "eval_index", "residual_norm",
                 "best_residual_norm", "best_param_error", "wall_time_s")
AGGREGATE_COLUMNS = TRACE_COLUMNS + ("mean_dist", "rms_dist")
REPORT_COLUMNS = ("problem", "solver", "at", "eval_index", "residual_norm",
                  "param_error", "wall_time_s", "eval_unit", "capped")
SWEEP_COLUMNS = ("problem", "param", "value", "trials", "mean_terminal_residual",
                 "rms_terminal_residual", "mean_terminal_state_error", "is_minimum")

# Fixed values of the hyperparameter sweep; the swept parameter replaces its
# entry while the others stay put.
ABLATION_FIXED = {"k": 30, "sigma": 0.9, "beta": 0.2}


@dataclass
class TrialResult:
    """One trial's trace, or the failure that ended it."""

    trial: int
    trace: object
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)


def run_trials(problem_name, solver, trials, budget, master_seed,
               time_cap_s=30.0, clock=None, problem_factory=None):
    """Run ``trials`` independently seeded solver runs under fresh meters.

    Each trial builds its own problem instance and a reseeded clone of
    ``solver`` from ``(master_seed, trial index)``, so trials are
    reproducible and order-independent.  Numerical failures are recorded
    per trial (with whatever trace survived), never fatal.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    factory = problem_factory or (lambda seed: make_problem(problem_name, seed))
    results = []
    for trial in range(trials):
        problem = factory(derive_seed(master_seed, trial, 0))
        run_solver = clone(solver)
        run_solver.set_params(seed=derive_seed(master_seed, trial, 1))
        kwargs = {"budget": int(budget), "time_cap_s": time_cap_s}
        if clock is not None:
            kwargs = {"meter": EvaluationMeter(budget=int(budget),
                                               time_cap_s=time_cap_s, clock=clock)}
        try:
            trace = run_solver.solve(problem, **kwargs)
            results.append(TrialResult(trial=trial, trace=trace))
        except NumericalFailure as failure:
            results.append(TrialResult(trial=trial, trace=failure.trace,
                                       error=str(failure)))
    return results


def _carry_forward(series, length):
    if len(series) >= length:
        return np.asarray(series[:length], dtype=float)
    out = np.empty(length)
    out[:len(series)] = series
    out[len(series):] = series[-1]
    return out


def _distance_series(trace):
    """Per-trial best-so-far distance on the evaluation axis.

    Parameter error of the best iterate when the solution is known (the
    running minimum makes the series nonincreasing), otherwise the
    best-so-far residual norm.
    """
    errors = trace.best_param_errors
    if len(errors) and np.all(np.isfinite(errors)):
        return np.minimum.accumulate(errors)
    return trace.best_residual_norms


@dataclass
class TrialAggregate:
    """Across-trial statistics on the shared evaluation axis ``1..budget``.

    ``mean_dist``/``rms_dist`` are the mean and root-mean-square of the
    per-trial best-so-far distance; traces shorter than the axis carry
    their last value forward.  ``last_recorded`` is the largest evaluation
    index any trial actually reached.
    """

    problem: str
    solver: str
    trial_count: int
    mean_dist: np.ndarray
    rms_dist: np.ndarray
    mean_best_residual: np.ndarray
    mean_best_param_error: np.ndarray
    mean_wall_time: np.ndarray
    last_recorded: int
    eval_unit: str = "residual"
    n_failed: int = 0

    @property
    def budget(self):
        return len(self.mean_dist)

    def __eq__(self, other):
        if not isinstance(other, TrialAggregate):
            return NotImplemented
        scalars = (self.problem == other.problem and self.solver == other.solver
                   and self.trial_count == other.trial_count
                   and self.last_recorded == other.last_recorded
                   and self.eval_unit == other.eval_unit)
        arrays = all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=True)
            for name in ("mean_dist", "rms_dist", "mean_best_residual",
                         "mean_best_param_error", "mean_wall_time"))
        return scalars and arrays


def aggregate_trials(results, budget, problem="", solver=""):
    """Reduce trial traces to a :class:`TrialAggregate` on axis ``1..budget``."""
    traces = [r.trace for r in results if r.trace is not None and r.trace.n_evaluations]
    if not traces:
        raise ValueError("no usable traces to aggregate")
    budget = int(budget)
    dist = np.stack([_carry_forward(_distance_series(t), budget) for t in traces])
    best_res = np.stack([_carry_forward(t.best_residual_norms, budget) for t in traces])
    best_err = np.stack([_carry_forward(t.best_param_errors, budget) for t in traces])
    wall = np.stack([_carry_forward(t.wall_times_s, budget) for t in traces])
    return TrialAggregate(
        problem=problem, solver=solver, trial_count=len(traces),
        mean_dist=dist.mean(axis=0),
        rms_dist=np.sqrt((dist * dist).mean(axis=0)),
        mean_best_residual=best_res.mean(axis=0),
        mean_best_param_error=best_err.mean(axis=0),
        mean_wall_time=wall.mean(axis=0),
        last_recorded=max(t.n_evaluations for t in traces),
        eval_unit=traces[0].eval_unit,
        n_failed=sum(1 for r in results if r.failed),
    )


def stopping_index(mean_distance_series):
    """First 1-based evaluation index within 1% of the series minimum."""
    series = np.asarray(mean_distance_series, dtype=float)
    if series.size == 0:
        raise ValueError("mean distance series must be nonempty")
    if not np.all(np.isfinite(series)) or np.any(series < 0):
        raise ValueError("mean distance series must be finite and nonnegative")
    return int(np.argmax(series <= 1.01 * series.min())) + 1


@dataclass
class ReportRow:
    """One solver's metrics at a shared comparison point."""

    problem: str
    solver: str
    at: str                   # "stopping_index" or "terminal"
    eval_index: int
    residual_norm: float
    param_error: float
    wall_time_s: float
    eval_unit: str
    capped: bool


def report_at_index(aggregates, index):
    """Comparison rows for every solver at the shared stopping index plus a
    terminal row at each solver's own last recorded evaluation.

    Solvers whose runs ended before ``index`` report their carried-forward
    value and are flagged ``capped``.
    """
    rows = []
    for agg in aggregates:
        for at, i in (("stopping_index", min(index, agg.budget)),
                      ("terminal", agg.last_recorded)):
            pos = i - 1
            rows.append(ReportRow(
                problem=agg.problem, solver=agg.solver, at=at, eval_index=i,
                residual_norm=float(agg.mean_best_residual[pos]),
                param_error=float(agg.mean_best_param_error[pos]),
                wall_time_s=float(agg.mean_wall_time[pos]),
                eval_unit=agg.eval_unit,
                capped=(at == "stopping_index" and agg.last_recorded < index),
            ))
    return rows


@dataclass
class SweepPoint:
    """Terminal statistics of one swept hyperparameter value."""

    problem: str
    param: str
    value: float
    trials: int
    mean_terminal_residual: float
    rms_terminal_residual: float
    mean_terminal_state_error: float
    is_minimum: bool = False


def ablation_sweep(param, values, trials=3, budget=7500, master_seed=0,
                   problem_name="deconv-intact", time_cap_s=30.0, clock=None):
    """Sweep one RSES hyperparameter on the deconvolution benchmark.

    The other hyperparameters stay at the fixed sweep values
    (``k=30, sigma=0.9, beta=0.2``); every swept value reuses the same
    trial seeds so comparisons are paired.  The minimum mean terminal
    residual is marked.
    """
    if param not in ("k", "sigma", "beta"):
        raise ValueError("param must be one of 'k', 'sigma', 'beta'")
    values = list(values)
    if not values or any(v <= 0 for v in values):
        raise ValueError("sweep values must be a nonempty list of positive numbers")
    points = []
    for value in values:
        knobs = dict(ABLATION_FIXED)
        knobs[param] = value
        solver = RSES(probe_count=int(knobs["k"]), probe_scale=float(knobs["sigma"]),
                      ridge_scale=float(knobs["beta"]))
        results = run_trials(problem_name, solver, trials, budget, master_seed,
                             time_cap_s=time_cap_s, clock=clock)
        finals = np.array([r.trace.best_residual_norm for r in results if r.trace is not None])
        errors = np.array([r.trace.best_param_error for r in results if r.trace is not None])
        points.append(SweepPoint(
            problem=problem_name, param=param, value=float(value),
            trials=len(finals),
            mean_terminal_residual=float(finals.mean()),
            rms_terminal_residual=float(np.sqrt((finals * finals).mean())),
            mean_terminal_state_error=float(errors.mean()),
        ))
    best = min(range(len(points)), key=lambda i: points[i].mean_terminal_residual)
    points[best].is_minimum = True
    return points


# ---------------------------------------------------------------------------
# CSV emission and parsing
# ---------------------------------------------------------------------------

def _fmt(value):
    """Full-precision decimal: shortest representation that round-trips."""
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value))


def _parse(text):
    return math.nan if text == "" else float(text)


def write_trace_csv(path, labeled_traces):
    """Write per-evaluation rows for ``(problem, solver, trial, trace)`` tuples."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for problem, solver, trial, trace in labeled_traces:
            if trace is None:
                continue
            for i in range(trace.n_evaluations):
                writer.writerow((
                    problem, solver, trial, i + 1,
                    _fmt(trace.residual_norms[i]),
                    _fmt(trace.best_residual_norms[i]),
                    _fmt(trace.best_param_errors[i]),
                    _fmt(trace.wall_times_s[i]),
                ))


def read_trace_csv(path):
    """Parse a trace CSV into ``{(problem, solver): {trial: column arrays}}``."""
    groups = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for row in reader:
            key = (row[0], row[1])
            trial = int(row[2])
            rows = groups.setdefault(key, {}).setdefault(trial, [])
            rows.append(tuple(_parse(v) for v in row[3:]))
    parsed = {}
    for key, trials in groups.items():
        parsed[key] = {}
        for trial, rows in trials.items():
            cols = np.array(rows, dtype=float)
            parsed[key][trial] = {
                "eval_index": cols[:, 0].astype(int),
                "residual_norm": cols[:, 1],
                "best_residual_norm": cols[:, 2],
                "best_param_error": cols[:, 3],
                "wall_time_s": cols[:, 4],
            }
    return parsed


def write_aggregate_csv(path, aggregate):
    """Write a :class:`TrialAggregate`, one row per evaluation index.

    Base columns carry the across-trial means (``trial`` holds the trial
    count); ``mean_dist``/``rms_dist`` extend them.  ``residual_norm`` is
    per-point and has no aggregate meaning, so it stays empty.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(AGGREGATE_COLUMNS)
        writer.writerow(("#meta", aggregate.eval_unit, aggregate.last_recorded,
                         aggregate.n_failed, "", "", "", "", "", ""))
        for i in range(aggregate.budget):
            writer.writerow((
                aggregate.problem, aggregate.solver, aggregate.trial_count, i + 1,
                "",
                _fmt(aggregate.mean_best_residual[i]),
                _fmt(aggregate.mean_best_param_error[i]),
                _fmt(aggregate.mean_wall_time[i]),
                _fmt(aggregate.mean_dist[i]),
                _fmt(aggregate.rms_dist[i]),
            ))


def read_aggregate_csv(path):
    """Parse :func:`write_aggregate_csv` output back into a TrialAggregate."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != AGGREGATE_COLUMNS:
            raise ValueError(f"{path}: unexpected aggregate header {header!r}")
        meta = next(reader)
        if meta[0] != "#meta":
            raise ValueError(f"{path}: missing aggregate meta row")
        eval_unit, last_recorded, n_failed = meta[1], int(meta[2]), int(meta[3])
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: aggregate file has no data rows")
    problem, solver, trial_count = rows[0][0], rows[0][1], int(rows[0][2])
    cols = np.array([[_parse(v) for v in row[5:]] for row in rows], dtype=float)
    return TrialAggregate(
        problem=problem, solver=solver, trial_count=trial_count,
        mean_best_residual=cols[:, 0], mean_best_param_error=cols[:, 1],
        mean_wall_time=cols[:, 2], mean_dist=cols[:, 3], rms_dist=cols[:, 4],
        last_recorded=last_recorded, eval_unit=eval_unit, n_failed=n_failed,
    )


def write_report_csv(path, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow((row.problem, row.solver, row.at, row.eval_index,
                             _fmt(row.residual_norm), _fmt(row.param_error),
                             _fmt(row.wall_time_s), row.eval_unit,
                             "true" if row.capped else "false"))


def format_report_text(rows, index):
    """Aligned plain-text comparison table."""
    headers = ("problem", "solver", "at", "evals", "residual", "param_error",
               "time_s", "unit", "capped")
    table = [headers]
    for row in rows:
        table.append((
            row.problem, row.solver, row.at, str(row.eval_index),
            f"{row.residual_norm:.3e}",
            "-" if math.isnan(row.param_error) else f"{row.param_error:.3e}",
            f"{row.wall_time_s:.3e}", row.eval_unit,
            "yes" if row.capped else "no",
        ))
    widths = [max(len(line[i]) for line in table) for i in range(len(headers))]
    lines = [f"shared stopping index: {index}"]
    for line in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_sweep_csv(path, points):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            writer.writerow((p.problem, p.param, _fmt(p.value), p.trials,
                             _fmt(p.mean_terminal_residual),
                             _fmt(p.rms_terminal_residual),
                             _fmt(p.mean_terminal_state_error),
                             "true" if p.is_minimum else "false"))


def aggregates_from_trace_files(paths):
    """Aggregate several trace CSVs onto one shared evaluation axis.

    The axis length is the longest trace found across all files, so every
    aggregate in the comparison is defined at the same indices.
    """
    parsed_files = [read_trace_csv(path) for path in paths]
    length = max(len(cols["eval_index"])
                 for parsed in parsed_files
                 for trials in parsed.values()
                 for cols in trials.values())
    aggregates = []
    for path, parsed in zip(paths, parsed_files):
        aggregates.extend(_aggregate_parsed(parsed, length))
    return aggregates


def aggregates_from_trace_file(path, budget=None):
    """Aggregate every ``(problem, solver)`` group found in a trace CSV.

    Reconstructs the distance series from recorded columns: the running
    minimum of the best parameter error when present, else the best
    residual norm.
    """
    parsed = read_trace_csv(path)
    return _aggregate_parsed(parsed, budget)


def _aggregate_parsed(parsed, budget=None):
    aggregates = []
    for (problem, solver), trials in sorted(parsed.items()):
        length = budget or max(len(t["eval_index"]) for t in trials.values())
        dist_rows, res_rows, err_rows, wall_rows = [], [], [], []
        for trial in sorted(trials):
            cols = trials[trial]
            err = cols["best_param_error"]
            dist = (np.minimum.accumulate(err) if np.all(np.isfinite(err))
                    else cols["best_residual_norm"])
            dist_rows.append(_carry_forward(dist, length))
            res_rows.append(_carry_forward(cols["best_residual_norm"], length))
            err_rows.append(_carry_forward(err, length))
            wall_rows.append(_carry_forward(cols["wall_time_s"], length))
        dist = np.stack(dist_rows)
        aggregates.append(TrialAggregate(
            problem=problem, solver=solver, trial_count=len(trials),
            mean_dist=dist.mean(axis=0),
            rms_dist=np.sqrt((dist * dist).mean(axis=0)),
            mean_best_residual=np.stack(res_rows).mean(axis=0),
            mean_best_param_error=np.stack(err_rows).mean(axis=0),
            mean_wall_time=np.stack(wall_rows).mean(axis=0),
            last_recorded=max(len(t["eval_index"]) for t in trials.values()),
            # the fixed trace columns carry no unit, so it follows the solver
            eval_unit="gradient" if solver == "adam" else "residual",
        ))
    return aggregates
