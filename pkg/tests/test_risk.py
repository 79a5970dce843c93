"""Tests for the barycentric risk of the harvest loss."""

import numpy as np
import pytest
from scipy import linalg

from harvestrisk.control import simulate, solve
from harvestrisk.errors import AsymptoticsInvalidError, InvalidParameterError
from harvestrisk.risk import (
    aggregation_residual,
    allocate_risk,
    allocations,
    expm_integral,
    integral_adjoint,
    loss_distribution,
    risk_coefficients,
    risk_report,
    robust_model,
    robust_policy,
    sample_initial_states,
    total_risk,
)
from harvestrisk.transport import barycenter
from harvestrisk.types import RiskPreferences
from harvestrisk.validation import validate_domain, validate_priors

GAMMA_ONE = RiskPreferences(gamma=1.0)


@pytest.fixture
def unit_prior():
    """k_0 ~ N(1, 1)."""
    return validate_priors([{"mean": [1.0], "scatter": [[1.0]], "weight": 1.0}])


def test_single_region_coefficients(single_region_solution):
    """Test alpha_tilde = -(1 - e^-1)/0.1 and G = 0.015."""
    coeffs = risk_coefficients(single_region_solution)
    np.testing.assert_allclose(coeffs.tilde_alpha, [-(1 - np.exp(-1.0)) / 0.1], rtol=1e-12)
    assert coeffs.tilde_alpha[0] == pytest.approx(-6.321206, abs=1e-6)
    np.testing.assert_allclose(coeffs.g_region, [0.015], rtol=1e-12)
    assert coeffs.g_total == pytest.approx(0.015, rel=1e-12)


def test_single_region_risk(single_region_solution, unit_prior):
    """Test total risk, allocation and robust mean for N=1."""
    coeffs = risk_coefficients(single_region_solution)
    assert coeffs.g_total * coeffs.tilde_alpha[0] == pytest.approx(-0.094818, abs=1e-6)
    assert total_risk(coeffs, unit_prior, GAMMA_ONE) == pytest.approx(-0.090323, abs=1e-6)
    assert allocate_risk(coeffs, unit_prior, GAMMA_ONE, 0) == pytest.approx(-0.085828, abs=1e-6)
    q_star = robust_model(coeffs, unit_prior, GAMMA_ONE)
    np.testing.assert_allclose(q_star.mean, [0.905182], atol=1e-6)
    np.testing.assert_allclose(q_star.scatter, [[1.0]], atol=1e-10)


def test_loss_distribution(single_region_solution, unit_prior):
    """Test L ~ N(G alpha_tilde m, (G alpha_tilde)^2 S)."""
    coeffs = risk_coefficients(single_region_solution)
    law = loss_distribution(barycenter(unit_prior), coeffs)
    loading = coeffs.g_total * coeffs.tilde_alpha[0]
    np.testing.assert_allclose(law.mean, [loading])
    np.testing.assert_allclose(law.scatter, [[loading**2]])


def test_no_aversion(single_region_solution, unit_prior):
    """Test that gamma -> 0 drops the penalty and keeps Q* at Q_B."""
    prefs = RiskPreferences(gamma=5.0, no_aversion=True)
    coeffs = risk_coefficients(single_region_solution)
    assert total_risk(coeffs, unit_prior, prefs) == pytest.approx(
        coeffs.g_total * coeffs.tilde_alpha[0]
    )
    np.testing.assert_allclose(robust_model(coeffs, unit_prior, prefs).mean, [1.0])


def test_risk_ignores_scatter(single_region_solution):
    """Test that only the barycentric mean enters the total risk."""
    coeffs = risk_coefficients(single_region_solution)
    narrow = validate_priors([{"mean": [1.0], "scatter": [[0.0]], "weight": 1.0}])
    wide = validate_priors([{"mean": [1.0], "scatter": [[25.0]], "weight": 1.0}])
    assert total_risk(coeffs, narrow, GAMMA_ONE) == total_risk(coeffs, wide, GAMMA_ONE)


def test_aggregation_identity(solution_factory, priors_factory):
    """Test sum_j pi_j rho(L_j|L) = rho(L) + (gamma/2) G^2 |alpha_tilde|^2."""
    rng = np.random.default_rng(41)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        solution = solution_factory(rng, n)
        priors = priors_factory(rng, n, int(rng.integers(1, 4)))
        prefs = RiskPreferences(gamma=float(rng.uniform(0.1, 5.0)))
        coeffs = risk_coefficients(solution)
        residual = aggregation_residual(coeffs, priors, prefs, solution.domain.pi_weights)
        scale = max(1.0, abs(total_risk(coeffs, priors, prefs)))
        assert abs(residual) <= 1e-10 * scale


def test_allocations_vector(symmetric_pair_solution):
    """Test that symmetric regions carry equal allocations."""
    priors = validate_priors(
        [{"mean": [1.0, 1.0], "scatter": np.eye(2).tolist(), "weight": 1.0}]
    )
    coeffs = risk_coefficients(symmetric_pair_solution)
    values = allocations(coeffs, priors, GAMMA_ONE)
    assert values.shape == (2,)
    assert values[0] == pytest.approx(values[1], rel=1e-12)
    with pytest.raises(InvalidParameterError):
        allocate_risk(coeffs, priors, GAMMA_ONE, 2)


def test_expm_integral_branches():
    """Test the inverse and block-exponential forms of int_0^T e^(tM) dt."""
    M = np.array([[-0.3, 0.1], [0.2, -0.5]])
    horizon = 4.0
    well_conditioned = expm_integral(M, horizon)
    block = np.zeros((4, 4))
    block[:2, :2] = M
    block[:2, 2:] = np.eye(2)
    np.testing.assert_allclose(
        well_conditioned, linalg.expm(horizon * block)[:2, 2:], rtol=1e-10
    )
    np.testing.assert_allclose(expm_integral(np.zeros((2, 2)), horizon), horizon * np.eye(2))
    np.testing.assert_allclose(expm_integral(M, 0.0), np.zeros((2, 2)))
    np.testing.assert_allclose(
        integral_adjoint(np.zeros((2, 2)), horizon, [1.0, 2.0]), [-4.0, -8.0]
    )


@pytest.mark.parametrize("small", [2e-8, 1e-5, 2e-4, 1e-3])
def test_expm_integral_relative_accuracy(small):
    """Test 1e-10 relative accuracy on both sides of the inverse-form switch."""
    horizon = 10.0
    M = np.diag([1.0, small])
    exact = [np.expm1(horizon), np.expm1(horizon * small) / small]
    integral = expm_integral(M, horizon)
    np.testing.assert_allclose(np.diag(integral), exact, rtol=1e-10, atol=0)
    assert abs(integral[0, 1]) + abs(integral[1, 0]) < 1e-10


def test_coefficients_need_positive_theta(single_region_params):
    """Test that theta <= 0 has no risk mapping."""
    domain = validate_domain(
        {
            "n_regions": 1,
            "a_diag": [0.5],
            "b_diag": [1.0],
            "d_weights": [1.0],
            "pi_weights": [1.0],
        }
    )
    solution = solve(domain, single_region_params)
    with pytest.raises(AsymptoticsInvalidError):
        risk_coefficients(solution)


def test_sample_initial_states(unit_prior):
    """Test seeded sampling: shape, determinism and count guard."""
    model = unit_prior.models[0]
    first = sample_initial_states(model, 100, seed=3)
    assert first.shape == (100, 1)
    np.testing.assert_array_equal(first, sample_initial_states(model, 100, seed=3))
    assert not np.array_equal(first, sample_initial_states(model, 100, seed=4))
    with pytest.raises(InvalidParameterError):
        sample_initial_states(model, 0, seed=3)


def test_robust_policy(single_region_solution, unit_prior):
    """Test the mean path at m* and the sampled paths."""
    coeffs = risk_coefficients(single_region_solution)
    times = np.linspace(0.0, 10.0, 11)
    policy = robust_policy(coeffs, single_region_solution, GAMMA_ONE, unit_prior, times)
    _, expected = simulate(policy.model.mean, times, single_region_solution)
    np.testing.assert_allclose(policy.mean_path, expected)

    paths = policy.sample_paths(50, seed=9)
    assert paths.shape == (50, 11, 1)
    np.testing.assert_array_equal(paths, policy.sample_paths(50, seed=9))

    mean, spread = policy.summary(20000, seed=9)
    assert mean.shape == spread.shape == (11, 1)
    assert np.all(np.abs(mean - policy.mean_path) <= 5 * spread + 1e-12)

    _, single = policy.summary(1, seed=9)
    np.testing.assert_array_equal(single, np.zeros_like(single))


def test_risk_report(symmetric_pair_solution):
    """Test that the report assembles the individual pieces."""
    priors = validate_priors(
        [
            {"mean": [1.0, 1.5], "scatter": [[1.0, 0.2], [0.2, 0.5]], "weight": 0.6},
            {"mean": [0.8, 1.0], "scatter": [[0.5, 0.0], [0.0, 0.5]], "weight": 0.4},
        ]
    )
    prefs = RiskPreferences(gamma=0.5)
    times = np.linspace(0.0, 5.0, 6)
    report = risk_report(symmetric_pair_solution, priors, prefs, times)
    coeffs = risk_coefficients(symmetric_pair_solution)
    assert report.total_risk == pytest.approx(total_risk(coeffs, priors, prefs))
    np.testing.assert_allclose(report.allocations, allocations(coeffs, priors, prefs))
    assert abs(report.aggregation_residual) <= 1e-10
    assert report.frechet_variance > 0
    assert report.robust_mean_policy.shape == (6, 2)
    np.testing.assert_allclose(
        report.robust_model.mean,
        priors.barycentric_mean() + 0.5 * coeffs.g_total * coeffs.tilde_alpha,
    )


def test_horizon_override(single_region_solution):
    """Test G scales as 1/T and a non-positive horizon is rejected."""
    base = risk_coefficients(single_region_solution)
    half = risk_coefficients(single_region_solution, horizon=5.0)
    assert half.g_total == pytest.approx(2.0 * base.g_total)
    with pytest.raises(InvalidParameterError):
        risk_coefficients(single_region_solution, horizon=0.0)
