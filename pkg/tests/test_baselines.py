"""Tests for the reference solvers and the external-solver adapter."""

import math

import numpy as np
import pytest

import rses
from rses.metering import EvaluationMeter, TraceRecorder
from rses.problem import ResidualProblem


def make_affine(a, b, **kwargs):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return ResidualProblem(dim_params=a.shape[1], dim_residual=a.shape[0],
                           evaluate=lambda x: a @ x - b, name="affine", **kwargs)


def fake_clock():
    t = [0.0]

    def clock():
        t[0] += 1.0
        return t[0]

    return clock


# ---------------------------------------------------------------------------
# finite differences and Gauss-Newton
# ---------------------------------------------------------------------------

def test_fd_jacobian_exact_for_affine():
    gen = np.random.default_rng(1)
    a = gen.standard_normal((5, 3))
    problem = make_affine(a, gen.standard_normal(5))
    recorder = TraceRecorder(problem, EvaluationMeter(budget=10, clock=fake_clock()))
    x = gen.standard_normal(3)
    base = recorder.evaluate(x)
    jac = rses.finite_difference_jacobian(recorder, x, base, 1e-7)
    assert np.allclose(jac, a, atol=1e-6)
    assert recorder.meter.used == 4  # base reused: n columns only


def test_fd_jacobian_quadratic():
    problem = ResidualProblem(dim_params=2, dim_residual=2,
                              evaluate=lambda x: x * x, name="squares")
    recorder = TraceRecorder(problem, EvaluationMeter(budget=10, clock=fake_clock()))
    x = np.array([1.0, 1.0])
    base = recorder.evaluate(x)
    jac = rses.finite_difference_jacobian(recorder, x, base, 1e-6)
    assert np.allclose(jac, np.diag([2.0, 2.0]), atol=5e-6)


def test_fd_jacobian_constant_map():
    problem = ResidualProblem(dim_params=3, dim_residual=2,
                              evaluate=lambda x: np.array([4.0, -1.0]), name="const")
    recorder = TraceRecorder(problem, EvaluationMeter(budget=10, clock=fake_clock()))
    base = recorder.evaluate(np.zeros(3))
    jac = rses.finite_difference_jacobian(recorder, np.zeros(3), base, 1e-6)
    assert np.array_equal(jac, np.zeros((2, 3)))


def test_gauss_newton_one_step_on_affine():
    gen = np.random.default_rng(2)
    a = gen.standard_normal((6, 3))
    b = gen.standard_normal(6)
    target = np.linalg.lstsq(a, b, rcond=None)[0]
    problem = make_affine(a, b)
    trace = rses.GaussNewton(tolerance=0.0, max_iterations=1).solve(
        problem, x0=np.zeros(3), budget=100)
    assert np.linalg.norm(trace.final_iterate - target) <= 1e-8


def test_gauss_newton_at_solution_takes_no_step():
    problem = rses.make_linear_problem()
    trace = rses.GaussNewton().solve(problem, x0=np.array([1.0, 1.0]), budget=100)
    assert trace.stop_reason == "tolerance"
    assert np.array_equal(trace.final_iterate, np.array([1.0, 1.0]))
    assert trace.n_evaluations == 1


def test_gauss_newton_benchmark_system():
    problem = rses.make_linear_problem()
    trace = rses.GaussNewton().solve(problem, budget=7500)
    assert trace.best_param_error <= 1e-10
    assert trace.n_evaluations == 1 + trace.iterations * 3


def test_gauss_newton_respects_budget():
    problem = make_affine(np.eye(4), np.ones(4))
    trace = rses.GaussNewton(tolerance=0.0).solve(problem, budget=17)
    assert trace.n_evaluations <= 17
    assert trace.stop_reason == "budget"


# ---------------------------------------------------------------------------
# ensemble Kalman inversion
# ---------------------------------------------------------------------------

def test_eki_converges_to_least_squares():
    gen = np.random.default_rng(3)
    a = gen.standard_normal((6, 3))
    b = gen.standard_normal(6)
    target = np.linalg.lstsq(a, b, rcond=None)[0]
    problem = make_affine(a, b)
    solver = rses.EnsembleKalmanInversion(ensemble_size=64, spread=1.0, seed=5)
    trace = solver.solve(problem, x0=np.zeros(3), budget=64 * 300)
    assert np.linalg.norm(trace.final_iterate - target) <= 1e-3


def test_eki_two_member_updates_stay_in_spread_span():
    problem = rses.make_linear_problem()
    solver = rses.EnsembleKalmanInversion(ensemble_size=2, spread=0.5, seed=1)
    trace = solver.solve(problem, budget=40)
    # the two-member anomaly space is one-dimensional: every iterate of the
    # run stays on the line through the two initial members
    from rses.rng import stream
    gen = stream(1, 0)
    members0 = np.zeros(2) + 0.5 * gen.standard_normal((2, 2))
    direction = members0[1] - members0[0]
    for point in (trace.final_iterate, trace.best_iterate):
        offset = point - members0[0]
        residual = offset - (offset @ direction) / (direction @ direction) * direction
        assert np.linalg.norm(residual) <= 1e-8


def test_eki_budget_exhaustion_mid_ensemble():
    problem = rses.make_linear_problem()
    solver = rses.EnsembleKalmanInversion(ensemble_size=4, seed=2)
    trace = solver.solve(problem, budget=10)  # 2 full steps, then partial
    assert trace.n_evaluations == 10
    assert trace.stop_reason == "budget"


def test_eki_deconv_intact_state_error():
    problem = rses.make_deconv_problem("intact", seed=11)
    trace = rses.EnsembleKalmanInversion(seed=3).solve(problem, budget=7500)
    assert trace.best_param_error <= 0.4  # reference order of magnitude 2e-1


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def quadratic_bowl(n):
    def vag(x):
        return 0.5 * float(x @ x), x.copy()

    return ResidualProblem(dim_params=n, dim_residual=n,
                           evaluate=lambda x: x.copy(),
                           gradient=lambda x: x.copy(),
                           value_and_gradient=vag, name="bowl")


def test_adam_requires_gradient():
    problem = make_affine(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        rses.Adam().solve(problem, budget=10)


def test_adam_first_step_is_signed_rate():
    grad = np.array([3.0, -0.5, 1e-4])
    problem = ResidualProblem(dim_params=3, dim_residual=3,
                              evaluate=lambda x: x.copy(),
                              gradient=lambda x: grad.copy(), name="plane")
    trace = rses.Adam(rate=1e-3, tolerance=0.0, max_iterations=1).solve(
        problem, x0=np.zeros(3), budget=5)
    expected = -1e-3 * grad / (np.abs(grad) + 1e-8)
    assert np.allclose(trace.final_iterate, expected, atol=1e-9)


def test_adam_zero_gradient_fixed_point():
    problem = ResidualProblem(dim_params=2, dim_residual=2,
                              evaluate=lambda x: x.copy(),
                              gradient=lambda x: np.zeros(2), name="flat")
    x0 = np.array([0.7, -0.2])
    trace = rses.Adam(tolerance=0.0, max_iterations=50).solve(problem, x0=x0, budget=100)
    assert np.array_equal(trace.final_iterate, x0)


def test_adam_loss_decreases_on_bowl():
    problem = quadratic_bowl(2)
    trace = rses.Adam(rate=1e-3, tolerance=0.0).solve(
        problem, x0=np.array([1.0, 1.0]), budget=100)
    losses = trace.residual_norms ** 2
    assert np.all(np.diff(losses[:100]) < 0.0)
    assert trace.eval_unit == "gradient"


def test_adam_budget_counts_gradient_calls():
    calls = [0]

    def vag(x):
        calls[0] += 1
        return 0.5 * float(x @ x), x.copy()

    problem = ResidualProblem(dim_params=2, dim_residual=2,
                              evaluate=lambda x: x.copy(), gradient=lambda x: x.copy(),
                              value_and_gradient=vag, name="bowl")
    trace = rses.Adam(tolerance=0.0).solve(problem, x0=np.ones(2), budget=37)
    assert calls[0] == 37
    assert trace.n_evaluations == 37


# ---------------------------------------------------------------------------
# xNES
# ---------------------------------------------------------------------------

def test_xnes_sphere_reaches_tolerance():
    problem = ResidualProblem(dim_params=2, dim_residual=2,
                              evaluate=lambda x: x.copy(), name="sphere")
    trace = rses.XNES(seed=4).solve(problem, x0=np.array([2.0, -1.5]), budget=5000)
    assert trace.best_residual_norm ** 2 <= 1e-6


def test_xnes_default_population():
    problem = ResidualProblem(dim_params=2, dim_residual=2,
                              evaluate=lambda x: x.copy(), name="sphere")
    trace = rses.XNES(seed=0).solve(problem, x0=np.ones(2), budget=60)
    assert trace.meta["population"] == 6  # 4 + floor(3 ln 2)


def test_xnes_covariance_factor_determinant_positive():
    from rses.baselines import _expm_symmetric

    gen = np.random.default_rng(6)
    factor = np.eye(3)
    for _ in range(100):
        sym = gen.standard_normal((3, 3))
        sym = 0.05 * (sym + sym.T)
        sym -= (np.trace(sym) / 3.0) * np.eye(3)  # trace-free, as in the update
        factor = factor @ _expm_symmetric(sym)
        det = np.linalg.det(factor)
        assert det > 0
        assert det == pytest.approx(1.0, rel=1e-8)


def test_xnes_utilities_sum_to_zero_and_rank_best_first():
    from rses.baselines import _utilities

    u = _utilities(6)
    assert abs(u.sum()) <= 1e-12
    assert u[0] == max(u)
    assert np.all(np.diff(u) <= 1e-15)


def test_xnes_respects_budget():
    problem = ResidualProblem(dim_params=3, dim_residual=3,
                              evaluate=lambda x: x.copy(), name="sphere")
    trace = rses.XNES(population=5, seed=1).solve(problem, x0=np.ones(3), budget=23)
    assert trace.n_evaluations == 23
    assert trace.stop_reason == "budget"


# ---------------------------------------------------------------------------
# external adapter
# ---------------------------------------------------------------------------

class RandomSearchProposer:
    """Minimal ask/tell client used to exercise the adapter surface."""

    def __init__(self, n, seed, batch=8):
        self.gen = np.random.default_rng(seed)
        self.n = n
        self.batch = batch
        self.best = None
        self.best_norm = math.inf
        self.tell_calls = 0

    def ask(self):
        center = self.best if self.best is not None else np.zeros(self.n)
        return center + 0.5 * self.gen.standard_normal((self.batch, self.n))

    def tell(self, points, norms):
        self.tell_calls += 1
        i = int(np.argmin(norms))
        if norms[i] < self.best_norm:
            self.best_norm = norms[i]
            self.best = points[i]


def test_external_adapter_runs_under_meter():
    problem = rses.make_linear_problem()
    proposer = RandomSearchProposer(2, seed=0)
    trace = rses.ExternalSolver(proposer=proposer).solve(problem, budget=100)
    assert trace.n_evaluations == 100
    assert proposer.tell_calls == 100 // 8  # final partial batch is not told
    assert np.all(np.diff(trace.best_residual_norms) <= 0.0)
    assert trace.best_residual_norm < np.linalg.norm(problem.evaluate(np.zeros(2)))


def test_external_adapter_requires_proposer():
    with pytest.raises(ValueError):
        rses.ExternalSolver().solve(rses.make_linear_problem(), budget=10)


def test_external_adapter_joins_harness():
    from rses import harness

    class SeededProposerSolver(rses.ExternalSolver):
        def _solve(self, problem, x0, meter):
            self.proposer = RandomSearchProposer(problem.dim_params, self.seed)
            return super()._solve(problem, x0, meter)

    results = harness.run_trials("linear", SeededProposerSolver(), trials=3,
                                 budget=60, master_seed=9, clock=fake_clock())
    assert len(results) == 3
    assert all(not r.failed and r.trace.n_evaluations <= 60 for r in results)


# ---------------------------------------------------------------------------
# shared invariants
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("solver", [
    rses.RSES(seed=1),
    rses.GaussNewton(seed=1),
    rses.EnsembleKalmanInversion(ensemble_size=6, seed=1),
    rses.XNES(seed=1),
])
def test_all_solvers_respect_meter_and_monotone_best(solver):
    problem = rses.make_linear_problem()
    budget = 53
    trace = solver.solve(problem, budget=budget)
    assert trace.n_evaluations <= budget
    assert np.all(np.diff(trace.best_residual_norms) <= 0.0)
