"""Evaluation budgets, wall-clock caps, and per-evaluation trace recording.

All solvers are charged through the same :class:`EvaluationMeter`, and every
charged evaluation is appended to a running history by
:class:`TraceRecorder`.  The finished :class:`SolveTrace` is what the
benchmark harness aggregates and what the comparison protocol is defined on.
"""

import math
import time
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np


class BudgetExhausted(Exception):
    """Raised when an evaluation is requested past the meter budget."""


class NumericalFailure(RuntimeError):
    """A linear-algebra failure inside a solver.

    Carries the partial :class:`SolveTrace` accumulated up to the failure in
    the ``trace`` attribute (``None`` when the failure happened before any
    evaluation was recorded).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class EvaluationMeter:
    """Budget and wall-clock accounting shared by all solvers.

    ``used`` counts whole evaluations and never exceeds ``budget``.  The
    clock is injectable so tests can make recorded wall times
    deterministic; solvers check the cap at iteration boundaries only.
    """

    budget: int
    time_cap_s: float = 30.0
    clock: callable = time.perf_counter
    used: int = 0
    start_time: float = field(init=False)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be a positive integer")
        if self.time_cap_s <= 0:
            raise ValueError("time_cap_s must be positive")
        self.start_time = self.clock()

    @property
    def remaining(self):
        return self.budget - self.used

    def elapsed(self):
        return self.clock() - self.start_time

    def time_exceeded(self):
        return self.elapsed() > self.time_cap_s


TraceRecord = namedtuple(
    "TraceRecord",
    ["eval_index", "residual_norm", "best_residual_norm", "best_param_error", "wall_time_s"],
)


@dataclass
class SolveTrace:
    """Per-evaluation history of one solver run.

    Arrays are indexed by evaluation order; ``eval_index`` in records and
    CSV output is 1-based.  ``best_param_errors`` holds the parameter error
    of the least-residual point seen so far and is NaN when the problem has
    no known solution.
    """

    residual_norms: np.ndarray
    best_residual_norms: np.ndarray
    best_param_errors: np.ndarray
    wall_times_s: np.ndarray
    final_iterate: np.ndarray
    best_iterate: np.ndarray
    stop_reason: str
    iterations: int
    eval_unit: str = "residual"
    meta: dict = field(default_factory=dict)

    @property
    def n_evaluations(self):
        return len(self.residual_norms)

    @property
    def best_residual_norm(self):
        return float(self.best_residual_norms[-1]) if self.n_evaluations else math.inf

    @property
    def best_param_error(self):
        return float(self.best_param_errors[-1]) if self.n_evaluations else math.nan

    @property
    def evaluations(self):
        return [
            TraceRecord(i + 1, self.residual_norms[i], self.best_residual_norms[i],
                        self.best_param_errors[i], self.wall_times_s[i])
            for i in range(self.n_evaluations)
        ]


class TraceRecorder:
    """Charges a meter per evaluation and accumulates the trace arrays.

    The first evaluation is validated against the problem contract (length
    ``dim_residual``, all finite); later evaluations skip the check for
    speed.
    """

    def __init__(self, problem, meter):
        self.problem = problem
        self.meter = meter
        n = meter.budget
        self._norm = np.empty(n)
        self._best_norm = np.empty(n)
        self._best_err = np.empty(n)
        self._wall = np.empty(n)
        self.count = 0
        self.best_norm = math.inf
        self.best_x = None
        self.best_err = math.nan
        self._x_star = problem.true_solution
        self._validated = False

    def _validate_first(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.problem.dim_residual,):
            raise ValueError(
                f"problem '{self.problem.name}' returned a residual of shape "
                f"{r.shape}, expected ({self.problem.dim_residual},)")
        if not np.all(np.isfinite(r)):
            raise ValueError(f"problem '{self.problem.name}' returned non-finite residual entries")
        self._validated = True
        return r

    def record(self, x, norm):
        """Charge one evaluation with a precomputed residual norm."""
        meter = self.meter
        if meter.used >= meter.budget:
            raise BudgetExhausted(f"budget of {meter.budget} evaluations exhausted")
        i = self.count
        if norm < self.best_norm:
            self.best_norm = norm
            self.best_x = np.array(x, dtype=float)
            if self._x_star is not None:
                d = self.best_x - self._x_star
                self.best_err = math.sqrt(float(d @ d))
        self._norm[i] = norm
        self._best_norm[i] = self.best_norm
        self._best_err[i] = self.best_err
        self._wall[i] = meter.clock() - meter.start_time
        meter.used += 1
        self.count = i + 1

    def evaluate(self, x):
        """Evaluate the residual at ``x``, charge the meter, record it."""
        if self.meter.used >= self.meter.budget:
            raise BudgetExhausted(f"budget of {self.meter.budget} evaluations exhausted")
        r = self.problem.evaluate(x)
        if not self._validated:
            r = self._validate_first(r)
        self.record(x, math.sqrt(float(r @ r)))
        return r

    def evaluate_batch(self, points):
        """Evaluate several points (rows), recording each one.

        Charges as many evaluations as the budget allows; if the batch does
        not fit, the affordable prefix is evaluated and recorded before
        ``BudgetExhausted`` is raised, so partial work is preserved.
        Batched evaluations share one wall-clock timestamp.
        """
        meter = self.meter
        b = len(points)
        allowed = min(b, meter.budget - meter.used)
        if allowed == 0:
            raise BudgetExhausted(f"budget of {meter.budget} evaluations exhausted")
        pts = points[:allowed]
        if self.problem.evaluate_batch is not None:
            residuals = self.problem.evaluate_batch(pts)
            if not self._validated:
                self._validate_first(residuals[0])
            norms = np.sqrt(np.einsum("ij,ij->i", residuals, residuals))
            wall = meter.clock() - meter.start_time
            i = self.count
            for j in range(allowed):
                nj = norms[j]
                if nj < self.best_norm:
                    self.best_norm = nj
                    self.best_x = np.array(pts[j], dtype=float)
                    if self._x_star is not None:
                        d = self.best_x - self._x_star
                        self.best_err = math.sqrt(float(d @ d))
                self._best_norm[i + j] = self.best_norm
                self._best_err[i + j] = self.best_err
            self._norm[i:i + allowed] = norms
            self._wall[i:i + allowed] = wall
            self.count = i + allowed
            meter.used += allowed
        else:
            residuals = np.empty((allowed, self.problem.dim_residual))
            for j in range(allowed):
                residuals[j] = self.evaluate(pts[j])
        if allowed < b:
            raise BudgetExhausted(f"budget of {meter.budget} evaluations exhausted mid-batch")
        return residuals

    def finish(self, final_iterate, stop_reason, iterations, eval_unit="residual", **meta):
        n = self.count
        final = np.asarray(final_iterate, dtype=float)
        best = final.copy() if self.best_x is None else self.best_x.copy()
        return SolveTrace(
            residual_norms=self._norm[:n].copy(),
            best_residual_norms=self._best_norm[:n].copy(),
            best_param_errors=self._best_err[:n].copy(),
            wall_times_s=self._wall[:n].copy(),
            final_iterate=final,
            best_iterate=best,
            stop_reason=stop_reason,
            iterations=iterations,
            eval_unit=eval_unit,
            meta=dict(meta),
        )
