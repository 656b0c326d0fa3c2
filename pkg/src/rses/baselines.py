"""Reference solvers run against RSES under the same evaluation meter.

Four baselines: Gauss-Newton with forward-difference Jacobians, ensemble
Kalman inversion (perturbed-observation form), Adam on the half squared
residual norm (gradient problems only, metered in gradient evaluations),
and exponential natural evolution strategies (xNES).  An ask/tell adapter
lets out-of-tree solvers join comparisons under the same meter and trace
contract.
"""

import math

import numpy as np

from . import rng
from ._validation import check_positive
from .base import BaseSolver
from .metering import BudgetExhausted, NumericalFailure, TraceRecorder


def finite_difference_jacobian(recorder, x, base_residual, step):
    """Forward-difference Jacobian estimate, one column per parameter.

    Uses per-coordinate steps ``step * max(1, |x_j|)`` and charges ``n``
    evaluations (the base residual is reused).
    """
    n = len(x)
    jac = np.empty((len(base_residual), n))
    for j in range(n):
        h = step * max(1.0, abs(x[j]))
        xj = x.copy()
        xj[j] += h
        jac[:, j] = (recorder.evaluate(xj) - base_residual) / h
    return jac


class GaussNewton(BaseSolver):
    """Gauss-Newton with forward-difference Jacobians.

    A tiny fixed damping keeps the normal matrix factorisable without
    masking the method's behaviour on noisy residuals, where the
    finite-difference Jacobian degrades.  Each iteration costs ``n + 1``
    evaluations: ``n`` difference columns plus the post-step residual,
    which is reused as the next base.
    """

    name = "gn"

    def __init__(self, step=1e-6, damping=1e-12, tolerance=None,
                 max_iterations=None, seed=0):
        self.step = step
        self.damping = damping
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.seed = seed

    def _solve(self, problem, x0, meter):
        check_positive(self.step, "step")
        check_positive(self.damping, "damping")
        tol = self.tolerance if self.tolerance is not None else self._default_tolerance(problem)
        n = problem.dim_params
        max_iterations = self.max_iterations
        if max_iterations is None:
            max_iterations = meter.budget  # budget-bound
        recorder = TraceRecorder(problem, meter)
        x = np.array(x0, dtype=float)
        r = recorder.evaluate(x)
        norm = recorder.best_norm
        iterations = 0
        stop = "max_iterations"
        idx = np.arange(n)
        for _ in range(max_iterations):
            if norm < tol:
                stop = "tolerance"
                break
            if meter.remaining < n + 1:
                stop = "budget"
                break
            if meter.time_exceeded():
                stop = "time_cap"
                break
            jac = finite_difference_jacobian(recorder, x, r, self.step)
            normal = jac.T @ jac
            normal[idx, idx] += self.damping
            try:
                delta = np.linalg.solve(normal, -(jac.T @ r))
            except np.linalg.LinAlgError:
                raise NumericalFailure(
                    "singular normal matrix in Gauss-Newton step",
                    trace=recorder.finish(x, "numerical_failure", iterations))
            if not np.all(np.isfinite(delta)):
                raise NumericalFailure(
                    "non-finite Gauss-Newton step",
                    trace=recorder.finish(x, "numerical_failure", iterations))
            x = x + delta
            r = recorder.evaluate(x)
            norm = math.sqrt(float(r @ r))
            iterations += 1
        return recorder.finish(x, stop, iterations, probe_count=n)


class EnsembleKalmanInversion(BaseSolver):
    """Perturbed-observation ensemble Kalman inversion toward zero residual.

    Each step evaluates every member, forms the empirical parameter/residual
    cross- and auto-covariances, and moves members toward observations drawn
    around zero.  Updates are linear combinations of member anomalies, so for
    linear forward maps the ensemble stays in the affine span of its
    initialisation; the ensemble size defaults to ``min(2n, 256)`` so that
    span can cover the parameter space on the benchmarks.

    The residual distance the update can resolve is limited by
    ``observation_noise``; that calibration knob (with the spread and step
    size) is not pinned by any external reference.
    """

    name = "eki"

    def __init__(self, ensemble_size=None, step_size=1.0, spread=0.5,
                 observation_noise=1e-4, max_iterations=None, seed=0):
        self.ensemble_size = ensemble_size
        self.step_size = step_size
        self.spread = spread
        self.observation_noise = observation_noise
        self.max_iterations = max_iterations
        self.seed = seed

    def _solve(self, problem, x0, meter):
        n = problem.dim_params
        m = problem.dim_residual
        size = self.ensemble_size
        if size is None:
            size = min(2 * n, 256)
        size = int(size)
        if size < 2:
            raise ValueError("ensemble_size must be >= 2")
        check_positive(self.step_size, "step_size")
        check_positive(self.spread, "spread")
        check_positive(self.observation_noise, "observation_noise")
        max_iterations = self.max_iterations
        if max_iterations is None:
            max_iterations = meter.budget
        gen = rng.stream(self.seed, 0)
        members = x0 + self.spread * gen.standard_normal((size, n))
        recorder = TraceRecorder(problem, meter)
        noise_std = math.sqrt(self.observation_noise)
        iterations = 0
        stop = "max_iterations"
        idx = np.arange(m)
        for _ in range(max_iterations):
            if meter.remaining == 0:
                stop = "budget"
                break
            if meter.time_exceeded():
                stop = "time_cap"
                break
            try:
                residuals = recorder.evaluate_batch(members)
            except BudgetExhausted:
                stop = "budget"
                break
            anomalies_u = members - members.mean(axis=0)
            anomalies_g = residuals - residuals.mean(axis=0)
            cross = anomalies_u.T @ anomalies_g / size        # (n, m)
            auto = anomalies_g.T @ anomalies_g / size         # (m, m)
            auto[idx, idx] += self.observation_noise
            targets = noise_std * gen.standard_normal((size, m))
            gain = np.linalg.solve(auto, (targets - residuals).T)
            members = members + self.step_size * (cross @ gain).T
            if not np.all(np.isfinite(members)):
                last_good = recorder.best_x if recorder.best_x is not None else x0
                raise NumericalFailure(
                    "ensemble diverged to non-finite values",
                    trace=recorder.finish(last_good, "numerical_failure", iterations))
            iterations += 1
        final = members.mean(axis=0)
        return recorder.finish(final, stop, iterations, ensemble_size=size)


class Adam(BaseSolver):
    """Bias-corrected first/second-moment descent on ``0.5 * ||F(x)||^2``.

    Requires a gradient callback; the meter counts gradient evaluations,
    which are reported on their own axis and never mixed with residual
    counts.  When the problem provides ``value_and_gradient``, the trace
    records the residual norm implied by the returned value.
    """

    name = "adam"

    def __init__(self, rate=1e-3, decay1=0.9, decay2=0.999, eps=1e-8,
                 tolerance=None, max_iterations=None, seed=0):
        self.rate = rate
        self.decay1 = decay1
        self.decay2 = decay2
        self.eps = eps
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.seed = seed

    def _solve(self, problem, x0, meter):
        if problem.gradient is None and problem.value_and_gradient is None:
            raise ValueError(f"problem '{problem.name}' has no gradient; Adam is unsupported")
        check_positive(self.rate, "rate")
        if not 0.0 <= self.decay1 < 1.0 or not 0.0 <= self.decay2 < 1.0:
            raise ValueError("moment decays must lie in [0, 1)")
        tol = self.tolerance if self.tolerance is not None else self._default_tolerance(problem)
        max_iterations = self.max_iterations
        if max_iterations is None:
            max_iterations = meter.budget
        recorder = TraceRecorder(problem, meter)
        recorder._validated = True  # gradient path never yields a residual vector
        value_and_gradient = problem.value_and_gradient
        x = np.array(x0, dtype=float)
        m1 = np.zeros_like(x)
        m2 = np.zeros_like(x)
        norm = math.inf
        iterations = 0
        stop = "max_iterations"
        for t in range(1, max_iterations + 1):
            if norm < tol:
                stop = "tolerance"
                break
            if meter.remaining == 0:
                stop = "budget"
                break
            if meter.time_exceeded():
                stop = "time_cap"
                break
            if value_and_gradient is not None:
                half_sq, grad = value_and_gradient(x)
                norm = math.sqrt(max(2.0 * float(half_sq), 0.0))
            else:
                grad = problem.gradient(x)
                norm = math.nan
            recorder.record(x, norm)
            m1 = self.decay1 * m1 + (1.0 - self.decay1) * grad
            m2 = self.decay2 * m2 + (1.0 - self.decay2) * grad * grad
            hat1 = m1 / (1.0 - self.decay1 ** t)
            hat2 = m2 / (1.0 - self.decay2 ** t)
            x = x - self.rate * hat1 / (np.sqrt(hat2) + self.eps)
            iterations += 1
        return recorder.finish(x, stop, iterations, eval_unit="gradient")


def _utilities(population):
    """Rank-based utility weights, best rank first; they sum to zero."""
    raw = np.log(population / 2.0 + 1.0) - np.log(np.arange(1, population + 1))
    raw = np.maximum(raw, 0.0)
    return raw / raw.sum() - 1.0 / population


def _expm_symmetric(matrix):
    values, vectors = np.linalg.eigh(matrix)
    return (vectors * np.exp(values)) @ vectors.T


class XNES(BaseSolver):
    """Exponential natural evolution strategy on the squared residual norm.

    Adapts the search mean, a scalar step size, and a unit-determinant
    covariance factor multiplicatively via natural-gradient steps on
    rank-based utilities.  The multiplicative (matrix-exponential) update
    keeps the covariance factor's determinant positive at every step.
    """

    name = "xnes"

    def __init__(self, population=None, step_scale=0.5, rate_mean=1.0,
                 rate_cov=None, max_iterations=None, seed=0):
        self.population = population
        self.step_scale = step_scale
        self.rate_mean = rate_mean
        self.rate_cov = rate_cov
        self.max_iterations = max_iterations
        self.seed = seed

    def _solve(self, problem, x0, meter):
        n = problem.dim_params
        population = self.population
        if population is None:
            population = 4 + int(math.floor(3.0 * math.log(n)))
        population = int(population)
        if population < 2:
            raise ValueError("population must be >= 2")
        check_positive(self.step_scale, "step_scale")
        rate_cov = self.rate_cov
        if rate_cov is None:
            rate_cov = (9.0 + 3.0 * math.log(n)) / (5.0 * n * math.sqrt(n))
        max_iterations = self.max_iterations
        if max_iterations is None:
            max_iterations = meter.budget
        gen = rng.stream(self.seed, 0)
        utilities = _utilities(population)
        mean = np.array(x0, dtype=float)
        sigma = float(self.step_scale)
        factor = np.eye(n)
        recorder = TraceRecorder(problem, meter)
        iterations = 0
        stop = "max_iterations"
        for _ in range(max_iterations):
            if meter.remaining == 0:
                stop = "budget"
                break
            if meter.time_exceeded():
                stop = "time_cap"
                break
            draws = gen.standard_normal((population, n))
            points = mean + sigma * (draws @ factor.T)
            try:
                residuals = recorder.evaluate_batch(points)
            except BudgetExhausted:
                stop = "budget"
                break
            fitness = np.einsum("ij,ij->i", residuals, residuals)
            order = np.argsort(fitness)
            z = draws[order]
            grad_mean = utilities @ z
            grad_m = (z.T * utilities) @ z - utilities.sum() * np.eye(n)
            grad_sigma = np.trace(grad_m) / n
            grad_factor = grad_m - grad_sigma * np.eye(n)
            mean = mean + self.rate_mean * sigma * (factor @ grad_mean)
            sigma = sigma * math.exp(0.5 * rate_cov * grad_sigma)
            factor = factor @ _expm_symmetric(0.5 * rate_cov * grad_factor)
            iterations += 1
        return recorder.finish(mean, stop, iterations, population=population)


class ExternalSolver(BaseSolver):
    """Adapter that meters a third-party proposer under the trace contract.

    The proposer implements the implementation-neutral ask/tell protocol:
    ``ask()`` returns the next batch of points (rows) or ``None`` to stop;
    ``tell(points, residual_norms)`` receives the measured norms.  Budget
    and wall-clock limits are enforced here, so external solvers join
    comparisons on equal footing.
    """

    name = "external"

    def __init__(self, proposer=None, max_iterations=None, seed=0):
        self.proposer = proposer
        self.max_iterations = max_iterations
        self.seed = seed

    def _solve(self, problem, x0, meter):
        if self.proposer is None:
            raise ValueError("ExternalSolver requires a proposer with ask()/tell()")
        max_iterations = self.max_iterations
        if max_iterations is None:
            max_iterations = meter.budget
        recorder = TraceRecorder(problem, meter)
        iterations = 0
        stop = "max_iterations"
        for _ in range(max_iterations):
            if meter.remaining == 0:
                stop = "budget"
                break
            if meter.time_exceeded():
                stop = "time_cap"
                break
            points = self.proposer.ask()
            if points is None or len(points) == 0:
                stop = "proposer_done"
                break
            points = np.atleast_2d(np.asarray(points, dtype=float))
            try:
                residuals = recorder.evaluate_batch(points)
            except BudgetExhausted:
                stop = "budget"
                break
            norms = np.sqrt(np.einsum("ij,ij->i", residuals, residuals))
            self.proposer.tell(points, norms)
            iterations += 1
        final = recorder.best_x if recorder.best_x is not None else x0
        return recorder.finish(final, stop, iterations)
