"""Tests for the four benchmark residual maps."""

import json
import math

import numpy as np
import pytest
from scipy import stats

import rses
from rses.benchmarks import (
    BrownianSpec, DeconvSpec, LinearSystemSpec, MlpSpec,
    spec_from_config, spec_to_config,
)
from rses.rng import stream


# ---------------------------------------------------------------------------
# linear system
# ---------------------------------------------------------------------------

def test_linear_values():
    problem = rses.make_linear_problem()
    assert np.array_equal(problem.evaluate(np.array([1.0, 1.0])), np.zeros(2))
    assert np.array_equal(problem.evaluate(np.zeros(2)), np.array([-1.0, 0.0]))
    assert np.array_equal(problem.evaluate(np.array([2.0, 2.0])), np.array([1.0, 0.0]))
    assert problem.dim_params == problem.dim_residual == 2
    assert np.array_equal(problem.initial_guess, np.zeros(2))


def test_linear_rhs_invariant():
    problem = rses.make_linear_problem()
    a = problem.details["matrix"]
    assert np.array_equal(problem.details["rhs"], a @ np.array([1.0, 1.0]))


def test_linear_gradient_matches_finite_differences():
    problem = rses.make_linear_problem()
    gen = np.random.default_rng(0)
    x = gen.standard_normal(2)
    g = problem.gradient(x)
    h = 1e-7
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (np.sum(problem.evaluate(x + e) ** 2) - np.sum(problem.evaluate(x - e) ** 2)) / (4 * h)
        assert g[j] == pytest.approx(fd, rel=1e-5)


def test_linear_batch_matches_single():
    problem = rses.make_linear_problem()
    pts = np.random.default_rng(1).standard_normal((5, 2))
    batch = problem.evaluate_batch(pts)
    for i in range(5):
        assert np.allclose(batch[i], problem.evaluate(pts[i]), atol=1e-15)


# ---------------------------------------------------------------------------
# Brownian calibration
# ---------------------------------------------------------------------------

def test_brownian_residual_small_at_truth():
    problem = rses.make_brownian_problem(seed=7)
    r = problem.evaluate(problem.true_solution)
    assert np.linalg.norm(r) <= 0.02  # CLT scale at 4096 paths


def test_brownian_vanishing_diffusion_limit():
    problem = rses.make_brownian_problem(seed=7)
    r = problem.evaluate(np.array([0.0, -20.0]))
    assert r[1] == pytest.approx(-0.1225, abs=1e-6)


def test_brownian_stochastic_but_keyed_reproducible():
    problem = rses.make_brownian_problem(seed=3)
    theta = problem.true_solution
    assert not np.array_equal(problem.evaluate(theta), problem.evaluate(theta))
    keyed = problem.details["evaluate_keyed"]
    assert np.array_equal(keyed(theta, 55), keyed(theta, 55))
    twin = rses.make_brownian_problem(seed=3)
    assert np.array_equal(problem.details["evaluate_keyed"](theta, 0),
                          twin.evaluate(theta))


def test_brownian_rejects_bad_parameters():
    problem = rses.make_brownian_problem(seed=0)
    with pytest.raises(ValueError):
        problem.evaluate(np.array([math.nan, 0.0]))
    with pytest.raises(ValueError):
        problem.evaluate(np.ones(3))


def test_brownian_reference_is_analytic():
    spec = BrownianSpec()
    m_star, v_star = spec.reference_stats
    assert m_star == pytest.approx(0.15)
    assert v_star == pytest.approx(0.1225)
    assert spec.steps * spec.step_size == pytest.approx(1.0)


@pytest.mark.parametrize("n_paths", [2 ** 10, 2 ** 12, 2 ** 14])
def test_brownian_euler_paths_match_analytic_moments(n_paths):
    spec = BrownianSpec(seed=1)
    theta = np.array([spec.drift_true, spec.log_sigma_true])
    sigma = math.exp(spec.log_sigma_true)
    terminal = spec.simulate_paths(theta, n_paths, stream(1, 99, n_paths))
    tol = 5.0 / math.sqrt(n_paths)
    assert abs(terminal.mean() - 0.15) <= tol * sigma
    assert abs(terminal.var() - sigma ** 2) <= tol * 2 * sigma ** 2


def test_brownian_terminal_draw_matches_path_simulation_in_law():
    # same analytic law: compare moments of the two samplers
    spec = BrownianSpec(seed=1)
    theta = np.array([0.4, math.log(0.8)])
    a = spec.simulate_paths(theta, 2 ** 14, stream(1, 98))
    b = spec.simulate_terminal(theta, 2 ** 14, stream(1, 97))
    assert abs(a.mean() - b.mean()) <= 0.05
    assert abs(a.var() - b.var()) <= 0.05
    assert stats.ks_2samp(a, b).pvalue > 0.01


# ---------------------------------------------------------------------------
# MLP regression
# ---------------------------------------------------------------------------

def test_mlp_parameter_counts():
    assert rses.mlp_parameter_count((8, 8)) == 97
    assert rses.mlp_parameter_count((16, 16)) == 321
    assert rses.mlp_parameter_count((32, 32)) == 1153
    assert rses.mlp_parameter_count((64, 64)) == 4353


def test_mlp_problem_dimensions():
    problem = rses.make_mlp_problem((8, 8), seed=0)
    assert problem.dim_params == 97
    assert problem.dim_residual == 256 + 97
    assert problem.probe_count_dim == 256  # penalty rows add no information
    assert rses.prescribe_probe_count(problem.probe_count_dim) == 20


def test_mlp_zero_parameters_give_zero_output():
    problem = rses.make_mlp_problem((8, 8), seed=0)
    theta = np.zeros(97)
    residual = problem.evaluate(theta)
    assert np.array_equal(residual[:256], -problem.details["targets"])
    assert np.array_equal(residual[256:], np.zeros(97))
    assert rses.mlp_forward(theta, 0.7, (8, 8)) == 0.0


def test_mlp_activation_values():
    from rses.benchmarks import _activation

    assert _activation(np.array([0.0]))[0] == 0.0
    assert _activation(np.array([1.0]))[0] == pytest.approx(1.0 / math.sqrt(2.0))
    s = np.linspace(-50, 50, 1001)
    assert np.all(np.abs(_activation(s)) < 1.0)


def test_mlp_single_unit_composition():
    # d1 = d2 = 1 with unit weights and zero biases: phi(phi(1)) = 1/sqrt(3)
    theta = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    assert rses.mlp_forward(theta, 1.0, (1, 1)) == pytest.approx(1.0 / math.sqrt(3.0))


def test_mlp_output_bounded_by_last_layer():
    gen = np.random.default_rng(2)
    theta = gen.standard_normal(97)
    w3 = theta[2 * 8 + 64 + 8:2 * 8 + 64 + 16]
    b3 = theta[-1]
    for x in np.linspace(-30, 30, 21):
        assert abs(rses.mlp_forward(theta, x, (8, 8)) - b3) <= np.sum(np.abs(w3))


def test_mlp_gradient_matches_finite_differences():
    problem = rses.make_mlp_problem((8, 8), seed=1)
    gen = np.random.default_rng(3)
    h = 1e-6
    for _ in range(5):
        theta = gen.standard_normal(97)
        grad = problem.gradient(theta)
        directions = gen.standard_normal((3, 97))
        for d in directions:
            d = d / np.linalg.norm(d)
            fp = 0.5 * np.sum(problem.evaluate(theta + h * d) ** 2)
            fm = 0.5 * np.sum(problem.evaluate(theta - h * d) ** 2)
            assert (fp - fm) / (2 * h) == pytest.approx(float(grad @ d), rel=1e-5, abs=1e-8)


def test_mlp_gradient_is_twice_half_gradient():
    problem = rses.make_mlp_problem((8, 8), seed=1)
    spec = problem.details["spec"]
    theta = np.random.default_rng(4).standard_normal(97)
    data = (problem.details["inputs"], problem.details["targets"])
    full = rses.mlp_gradient(theta, data, (8, 8), spec.tikhonov)
    assert np.allclose(full, 2.0 * problem.gradient(theta), rtol=1e-12)


def test_mlp_gradient_penalty_only():
    # zero data rows leave only the Tikhonov block: gradient of the squared
    # norm is tikhonov * theta
    theta = np.random.default_rng(5).standard_normal(97)
    lam = 1e-6
    grad = rses.mlp_gradient(theta, (np.empty(0), np.empty(0)), (8, 8), lam)
    assert np.allclose(grad, lam * theta, rtol=1e-12)


def test_mlp_value_and_gradient_consistent():
    problem = rses.make_mlp_problem((16, 16), seed=2)
    theta = problem.initial_guess
    value, grad = problem.value_and_gradient(theta)
    residual = problem.evaluate(theta)
    assert value == pytest.approx(0.5 * float(residual @ residual), rel=1e-12)
    assert np.allclose(grad, problem.gradient(theta), rtol=1e-12)


def test_mlp_data_noise_is_gaussian():
    # canonical dataset: standardised residuals pass a 1% KS normality check
    problem = rses.make_mlp_problem((8, 8), seed=0)
    x = problem.details["inputs"]
    y = problem.details["targets"]
    standardized = (y - np.sin(3 * x) - 0.3 * x) / 0.05
    assert stats.kstest(standardized, "norm").pvalue > 0.01


def test_mlp_data_fixed_across_seeds_init_varies():
    a = rses.make_mlp_problem((8, 8), seed=0)
    b = rses.make_mlp_problem((8, 8), seed=1)
    assert np.array_equal(a.details["targets"], b.details["targets"])
    assert not np.array_equal(a.initial_guess, b.initial_guess)


def test_mlp_rejects_unknown_widths():
    with pytest.raises(ValueError):
        MlpSpec(widths=(5, 5)).build()
    with pytest.raises(ValueError):
        rses.mlp_forward(np.zeros(10), 1.0, (8, 8))


# ---------------------------------------------------------------------------
# deconvolution
# ---------------------------------------------------------------------------

def test_deconv_intact_tail_is_zero():
    problem = rses.make_deconv_problem("intact", seed=4)
    for x in (np.zeros(128), problem.true_solution, np.random.default_rng(0).standard_normal(128)):
        residual = problem.evaluate(x)
        assert np.array_equal(residual[128:], np.zeros(256))


def test_deconv_blur_exactly_symmetric():
    problem = rses.make_deconv_problem("intact", seed=4)
    a = problem.details["blur"]
    assert np.array_equal(a, a.T)
    assert np.linalg.norm(a - a.T) == 0.0


def test_deconv_residual_at_truth_within_noise():
    problem = rses.make_deconv_problem("intact", seed=4)
    residual = problem.evaluate(problem.true_solution)
    observations = problem.details["observations"]
    clean = np.tanh(problem.details["blur"] @ problem.true_solution)
    eta = observations - np.round(clean / 1e-3) * 1e-3
    # per entry: jitter (5e-4) + quantisation (5e-4) on top of the drawn noise
    assert np.all(np.abs(residual[:128]) <= np.abs(eta) + 1.5e-3 + 1e-12)


def test_deconv_quantisation_bound():
    gen = np.random.default_rng(5)
    z = gen.uniform(-1, 1, 1000)
    rounded = np.round(z / 1e-3) * 1e-3
    assert np.max(np.abs(rounded - z)) <= 5e-4 + 1e-12


def test_deconv_perturbed_mixing_fixed_per_seed():
    a = rses.make_deconv_problem("perturbed", seed=6)
    b = rses.make_deconv_problem("perturbed", seed=6)
    c = rses.make_deconv_problem("perturbed", seed=7)
    assert np.array_equal(a.details["mixing"], b.details["mixing"])
    assert not np.array_equal(a.details["mixing"], c.details["mixing"])
    assert a.details["mixing"].shape == (384, 128)


def test_deconv_jitter_keyed_by_call_counter():
    a = rses.make_deconv_problem("intact", seed=6)
    b = rses.make_deconv_problem("intact", seed=6)
    x = np.random.default_rng(1).standard_normal(128)
    first_a, first_b = a.evaluate(x), b.evaluate(x)
    assert np.array_equal(first_a, first_b)          # same (seed, call 0)
    second_a = a.evaluate(x)
    assert not np.array_equal(first_a, second_a)     # fresh jitter per call
    assert np.array_equal(second_a, b.evaluate(x))   # same (seed, call 1)


def test_deconv_dimensions_and_start():
    problem = rses.make_deconv_problem("perturbed", seed=0)
    assert problem.dim_params == 128
    assert problem.dim_residual == 384
    assert np.array_equal(problem.initial_guess, np.zeros(128))
    assert problem.stochastic


def test_deconv_rejects_unknown_weighting():
    with pytest.raises(ValueError):
        DeconvSpec(weighting="fancy").build()


# ---------------------------------------------------------------------------
# registry and serialisation
# ---------------------------------------------------------------------------

def test_make_problem_registry():
    for name in rses.PROBLEM_NAMES:
        problem = rses.make_problem(name, seed=1)
        residual = problem.evaluate(problem.default_start())
        assert residual.shape == (problem.dim_residual,)
        assert np.all(np.isfinite(residual))
        assert problem.name == name
    with pytest.raises(ValueError):
        rses.make_problem("nope")


def test_spec_json_round_trip():
    for spec in (LinearSystemSpec(), BrownianSpec(seed=3),
                 MlpSpec(widths=(16, 16), data_seed=9, init_seed=4),
                 DeconvSpec(weighting="perturbed", seed=5)):
        config = json.loads(json.dumps(spec_to_config(spec)))
        rebuilt = spec_from_config(config)
        assert rebuilt == spec
