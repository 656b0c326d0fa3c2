"""Residual subspace evolution strategy (RSES).

Each iteration draws ``k`` Gaussian probes around the current iterate,
measures how the residual changes along them, solves a small
ridge-stabilised least-squares system to recombine the probes, and steps
inside the probe span.  One iteration costs exactly ``k + 1`` residual
evaluations: ``k`` probes plus the re-evaluation at the updated point,
which is reused as the next iteration's base residual.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import rng
from ._validation import as_matrix, as_vector, check_positive
from .base import BaseSolver
from .metering import BudgetExhausted, NumericalFailure, TraceRecorder


def ridge_schedule(ridge_scale, residual_norm, floor=1e-8):
    """Residual-dependent ridge parameter ``max(scale * norm^2, floor)``.

    Shrinks the regularisation quadratically as the residual shrinks, while
    the floor keeps the recombination system positive definite near
    convergence.
    """
    check_positive(ridge_scale, "ridge_scale")
    check_positive(floor, "floor")
    if not np.isfinite(residual_norm) or residual_norm < 0:
        raise ValueError(f"residual_norm must be finite and nonnegative, got {residual_norm!r}")
    return max(ridge_scale * residual_norm * residual_norm, floor)


def prescribe_probe_count(dim_residual):
    """Default probe count ``4 + floor(3 ln m)`` for residual dimension m."""
    m = int(dim_residual)
    if m < 1:
        raise ValueError(f"dim_residual must be >= 1, got {dim_residual!r}")
    return 4 + int(math.floor(3.0 * math.log(m)))


def prescribe_iterations(budget, probe_count):
    """Iterations affordable under ``budget``: ``floor(budget / (k + 1))``."""
    budget = int(budget)
    k = int(probe_count)
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if k < 1:
        raise ValueError("probe_count must be >= 1")
    return budget // (k + 1)


def draw_probes(dim_params, probe_count, probe_scale, rng_stream):
    """Draw the probe matrix: ``probe_scale`` times standard normal columns.

    The caller positions ``rng_stream`` (one keyed stream per iteration), so
    identical keys give bit-identical probes regardless of evaluation order.
    """
    return probe_scale * rng_stream.standard_normal((dim_params, probe_count))


@dataclass
class ProbeBatch:
    """One iteration's probes and measured residual differences."""

    probes: np.ndarray        # (n, k)
    differences: np.ndarray   # (m, k)
    base_residual: np.ndarray


def collect_differences(recorder, x, base_residual, probes):
    """Evaluate the residual at each probed point and stack the differences.

    Charges exactly ``k`` evaluations through ``recorder``.  If the budget
    runs out mid-batch, the evaluations already made stay in the trace and
    ``BudgetExhausted`` propagates.
    """
    n, k = probes.shape
    diffs = np.empty((len(base_residual), k))
    for i in range(k):
        diffs[:, i] = recorder.evaluate(x + probes[:, i]) - base_residual
    return ProbeBatch(probes=probes, differences=diffs, base_residual=base_residual)


@dataclass
class RidgeSolution:
    """Probe recombination weights from the regularised normal equations."""

    weights: np.ndarray
    ridge: float
    gram_condition_hint: float  # (largest / smallest Cholesky pivot)^2, diagnostic only


def ridge_weights(differences, residual, ridge):
    """Solve ``(B'B + ridge*I) w = -B' r`` for the recombination weights.

    The Gram matrix is formed explicitly (k stays small) and factorised by
    Cholesky; a failure retries once with the ridge doubled before raising
    :class:`NumericalFailure`.  The solution norm obeys
    ``||w|| <= ||r|| / (2 sqrt(ridge))`` for any difference matrix.
    """
    b = as_matrix(differences, name="differences")
    r = as_vector(residual, b.shape[0], "residual")
    check_positive(ridge, "ridge")
    gram = b.T @ b
    rhs = -(b.T @ r)
    k = b.shape[1]
    idx = np.arange(k)
    for attempt, lam in enumerate((ridge, 2.0 * ridge)):
        gram_reg = gram.copy()
        gram_reg[idx, idx] += lam
        try:
            factor = scipy.linalg.cho_factor(gram_reg, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            continue
        w = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        pivots = np.abs(np.diag(factor[0]))
        hint = float((pivots.max() / pivots.min()) ** 2) if k else 0.0
        return RidgeSolution(weights=w, ridge=lam, gram_condition_hint=hint)
    raise NumericalFailure(f"ridge recombination failed for ridge={ridge!r}")


def surrogate_predict(base_residual, differences, weights):
    """Predicted residual at the recombined displacement: ``r + B w``."""
    r = as_vector(base_residual, name="base_residual")
    b = as_matrix(differences, shape=(len(r), None), name="differences")
    w = as_vector(weights, b.shape[1], "weights")
    return r + b @ w


def apply_update(x, probes, weights):
    """Apply the recombined step: ``x + P w`` (always inside the probe span)."""
    x = as_vector(x, name="x")
    p = as_matrix(probes, shape=(len(x), None), name="probes")
    w = as_vector(weights, p.shape[1], "weights")
    return x + p @ w


def run_rses(problem, x0, *, probe_count, probe_scale, ridge_scale, tolerance,
             max_iterations, floor, seed, meter):
    """Run the RSES iteration until tolerance, iteration cap, budget, or
    wall-clock cap; returns the full trace.

    Total evaluations recorded are always ``1 + iterations * (k + 1)``: an
    iteration is only started while ``k + 1`` evaluations remain.
    """
    recorder = TraceRecorder(problem, meter)
    x = np.array(x0, dtype=float)
    r = recorder.evaluate(x)
    norm = recorder.best_norm
    ridge = max(ridge_scale * norm * norm, floor)
    iterations = 0
    stop = "max_iterations"
    for t in range(max_iterations):
        if norm < tolerance:
            stop = "tolerance"
            break
        if meter.remaining < probe_count + 1:
            stop = "budget"
            break
        if meter.time_exceeded():
            stop = "time_cap"
            break
        probes = draw_probes(problem.dim_params, probe_count, probe_scale,
                             rng.stream(seed, t))
        batch = collect_differences(recorder, x, r, probes)
        try:
            solution = ridge_weights(batch.differences, r, ridge)
        except NumericalFailure as failure:
            failure.trace = recorder.finish(x, "numerical_failure", iterations,
                                            probe_count=probe_count)
            raise
        x = x + probes @ solution.weights
        r = recorder.evaluate(x)
        norm = math.sqrt(float(r @ r))
        ridge = max(ridge_scale * norm * norm, floor)
        iterations += 1
    return recorder.finish(x, stop, iterations, probe_count=probe_count)


class RSES(BaseSolver):
    """Residual subspace evolution strategy solver.

    Parameters
    ----------
    probe_count : int, optional
        Probes per iteration.  Defaults to ``4 + floor(3 ln m)`` from the
        problem's residual dimension.
    probe_scale : float
        Standard deviation of the Gaussian probes; 0.05 suits unit-scaled
        problems.
    ridge_scale : float
        Coefficient of the residual-dependent ridge schedule.
    tolerance : float, optional
        Stop once the residual norm falls below this.  Defaults to 1e-12
        for deterministic problems and 0 (disabled) for stochastic ones.
    max_iterations : int, optional
        Iteration cap; defaults to the number of iterations the evaluation
        budget affords.
    floor : float
        Lower bound of the ridge schedule.
    seed : int
        Keys the probe streams; same seed, same probes.
    """

    name = "rses"

    def __init__(self, probe_count=None, probe_scale=0.05, ridge_scale=1e-5,
                 tolerance=None, max_iterations=None, floor=1e-8, seed=0):
        self.probe_count = probe_count
        self.probe_scale = probe_scale
        self.ridge_scale = ridge_scale
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.floor = floor
        self.seed = seed

    def _solve(self, problem, x0, meter):
        k = self.probe_count
        if k is None:
            k = prescribe_probe_count(problem.probe_count_dim)
        k = int(k)
        if k < 1:
            raise ValueError("probe_count must be >= 1")
        check_positive(self.probe_scale, "probe_scale")
        check_positive(self.ridge_scale, "ridge_scale")
        check_positive(self.floor, "floor")
        tol = self.tolerance
        if tol is None:
            tol = self._default_tolerance(problem)
        if tol < 0:
            raise ValueError("tolerance must be nonnegative")
        iterations = self.max_iterations
        if iterations is None:
            iterations = prescribe_iterations(meter.budget, k)
        return run_rses(
            problem, x0,
            probe_count=k, probe_scale=float(self.probe_scale),
            ridge_scale=float(self.ridge_scale), tolerance=float(tol),
            max_iterations=int(iterations), floor=float(self.floor),
            seed=self.seed, meter=meter,
        )
