"""Tests for the closed-form control solution."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from harvestrisk.control import (
    asymptotic_harvest_rate,
    bracket,
    closed_loop_matrix,
    compute_lambda_alpha,
    compute_theta,
    finite_horizon_trajectory,
    harvest_rate,
    harvest_trajectory,
    phi_factor,
    psi0,
    simulate,
    solve,
    state_trajectory,
    terminal_payoff,
    value_function,
)
from harvestrisk.errors import (
    AsymptoticsInvalidError,
    DegenerateThetaError,
    InvalidParameterError,
    NegativeBracketError,
    NonPositiveEigenvectorError,
    NonPositiveStateError,
)
from harvestrisk.types import EconomicParams, RateVariant
from harvestrisk.validation import validate_domain

# (1 - 1/0.15) e^{-1.5} + 1/0.15
SINGLE_REGION_BRACKET = (1.0 - 1.0 / 0.15) * np.exp(-1.5) + 1.0 / 0.15


def test_single_region_scalars(single_region_solution):
    """Test theta = 0.15, Lambda = 1 and M = -0.1."""
    assert single_region_solution.theta == pytest.approx(0.15, rel=1e-12)
    assert single_region_solution.lambda_alpha == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(single_region_solution.closed_loop, [[-0.1]], rtol=1e-12)


def test_psi0_and_value_function(single_region_solution, single_region_params):
    """Test psi_0(0) and v(0, 1) for the single-region scenario."""
    assert SINGLE_REGION_BRACKET == pytest.approx(5.402262, abs=1e-6)
    value = psi0(0.0, 0.15, 1.0, single_region_params)
    assert value == pytest.approx(SINGLE_REGION_BRACKET, rel=1e-12)
    assert bracket(0.0, single_region_solution) == pytest.approx(value, rel=1e-12)
    assert value_function(0.0, [1.0], single_region_solution) == pytest.approx(
        2.0 * np.sqrt(SINGLE_REGION_BRACKET), rel=1e-12
    )


def test_psi0_at_horizon(single_region_params):
    """Test that the bracket equals kappa_0 at T."""
    value = psi0(10.0, 0.15, 1.0, single_region_params)
    assert value == pytest.approx(np.exp(-0.1 * 10.0 / 0.5) * 1.0, rel=1e-12)


def test_paper_rate(single_region_solution):
    """Test c(0, 1) = 1 / bracket."""
    rate = harvest_rate(0.0, [1.0], single_region_solution, RateVariant.PAPER)
    np.testing.assert_allclose(rate, [1.0 / SINGLE_REGION_BRACKET], rtol=1e-12)


def test_variants_agree_for_single_region(single_region_solution):
    """Test that the two rate variants coincide for N=1, D=1."""
    for t in np.linspace(0.0, 10.0, 21):
        for k in (0.3, 1.0, 4.5):
            paper = harvest_rate(t, [k], single_region_solution, RateVariant.PAPER)
            foc = harvest_rate(t, [k], single_region_solution, RateVariant.FOC)
            np.testing.assert_allclose(paper, foc, rtol=1e-12)


def test_variants_differ_on_asymmetric_domain(asymmetric_pair_domain):
    """Test that the variants are distinct closed forms for N > 1."""
    params = EconomicParams(r=0.1, beta=0.5, horizon=5.0, kappa0=1.0)
    solution = solve(asymmetric_pair_domain, params)
    paper = harvest_rate(1.0, [1.0, 1.0], solution, RateVariant.PAPER)
    foc = harvest_rate(1.0, [1.0, 1.0], solution, RateVariant.FOC)
    assert not np.allclose(paper, foc)


def test_terminal_consistency(single_region_solution, symmetric_pair_solution):
    """Test v(T, k) = g(T, k)."""
    for solution, k in ((single_region_solution, [2.0]), (symmetric_pair_solution, [1.0, 3.0])):
        horizon = solution.params.horizon
        assert value_function(horizon, k, solution) == pytest.approx(
            terminal_payoff(k, solution), rel=1e-14
        )


@settings(
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
@given(
    scale=st.floats(min_value=1e-3, max_value=1e3),
    t=st.floats(min_value=0.0, max_value=5.0),
    k1=st.floats(min_value=0.01, max_value=10.0),
    k2=st.floats(min_value=0.01, max_value=10.0),
)
def test_value_function_homogeneity(symmetric_pair_solution, scale, t, k1, k2):
    """Test v(t, c k) = c^(1-beta) v(t, k)."""
    k = np.array([k1, k2])
    base = value_function(t, k, symmetric_pair_solution)
    scaled = value_function(t, scale * k, symmetric_pair_solution)
    assert scaled == pytest.approx(scale**0.5 * base, rel=1e-12)


def test_non_positive_state(single_region_solution):
    """Test that <alpha, k> <= 0 is rejected."""
    with pytest.raises(NonPositiveStateError):
        value_function(0.0, [0.0], single_region_solution)
    with pytest.raises(NonPositiveStateError):
        harvest_rate(0.0, [-1.0], single_region_solution)


def test_compute_theta():
    """Test theta and the degenerate case lambda = r / (1 - beta)."""
    params = EconomicParams(r=0.1, beta=0.5, horizon=1.0, kappa0=1.0)
    assert compute_theta(params, 0.05) == pytest.approx(0.15)
    assert compute_theta(params, 0.5) == pytest.approx(-0.3)
    with pytest.raises(DegenerateThetaError):
        compute_theta(params, 0.2)


def test_lambda_alpha(symmetric_pair_domain):
    """Test Lambda(alpha) = 2 sqrt(2) on K2 and the positivity guard."""
    alpha = np.full(2, 1 / np.sqrt(2))
    assert compute_lambda_alpha(symmetric_pair_domain, alpha, 0.5) == pytest.approx(
        2.0 * np.sqrt(2.0), rel=1e-12
    )
    with pytest.raises(NonPositiveEigenvectorError):
        compute_lambda_alpha(symmetric_pair_domain, np.array([1.0, 0.0]), 0.5)


def test_negative_bracket(single_region_params):
    """Test that a non-positive psi_0 bracket raises."""
    with pytest.raises(NegativeBracketError):
        psi0(0.0, 0.15, -1.0, single_region_params)


def test_phi_factor(single_region_solution):
    """Test Phi(T) = Lambda / (theta kappa_0) and Phi -> 1 far from T."""
    assert phi_factor(10.0, single_region_solution) == pytest.approx(1.0 / 0.15)
    long_run = solve(
        single_region_solution.domain,
        EconomicParams(r=0.1, beta=0.5, horizon=400.0, kappa0=1.0),
    )
    assert phi_factor(0.0, long_run) == pytest.approx(1.0, abs=1e-12)


def test_asymptotic_rate(single_region_solution):
    """Test c = 0.15 k for the single-region scenario."""
    np.testing.assert_allclose(
        asymptotic_harvest_rate([2.0], single_region_solution), [0.3], rtol=1e-12
    )


def test_asymptotics_need_positive_theta(single_region_params):
    """Test that theta < 0 solves but refuses long-horizon formulas."""
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
    assert solution.theta == pytest.approx(-0.3)
    assert solution.closed_loop is None
    assert value_function(0.0, [1.0], solution) > 0
    with pytest.raises(AsymptoticsInvalidError):
        asymptotic_harvest_rate([1.0], solution)
    with pytest.raises(AsymptoticsInvalidError):
        harvest_trajectory([1.0], [0.0, 1.0], solution)


def test_symmetric_pair_closed_loop(symmetric_pair_solution):
    """Test M on K2."""
    expected = np.array([[0.964645, -1.035355], [-1.035355, 0.964645]])
    np.testing.assert_allclose(symmetric_pair_solution.closed_loop, expected, atol=1e-6)
    assert symmetric_pair_solution.theta == pytest.approx(0.2)
    assert symmetric_pair_solution.lambda_alpha == pytest.approx(2.0 * np.sqrt(2.0))


def test_closed_loop_is_rank_one_update(solution_factory):
    """Test rank(M - drift) = 1."""
    rng = np.random.default_rng(17)
    for _ in range(20):
        solution = solution_factory(rng, int(rng.integers(2, 7)))
        rebuilt = closed_loop_matrix(
            solution.domain,
            solution.spectral,
            solution.theta,
            solution.lambda_alpha,
            solution.params.beta,
        )
        np.testing.assert_allclose(rebuilt, solution.closed_loop)
        singular = np.linalg.svd(solution.closed_loop - solution.spectral.drift, compute_uv=False)
        assert singular[1] <= 1e-12 * singular[0]


def test_state_trajectory(single_region_solution):
    """Test k(0) = k_0 and k(5) = e^-0.5 for the single-region scenario."""
    states = state_trajectory([1.0], [0.0, 5.0], single_region_solution.closed_loop)
    np.testing.assert_allclose(states[:, 0], [1.0, np.exp(-0.5)], rtol=1e-12)


def test_state_trajectory_grids_agree(symmetric_pair_solution):
    """Test that uniform and non-uniform grids give the same states."""
    M = symmetric_pair_solution.closed_loop
    uniform = np.linspace(0.0, 5.0, 11)
    irregular = np.concatenate([uniform[:5], uniform[5:] + 1e-3])
    k0 = [1.2, 0.8]
    a = state_trajectory(k0, uniform, M)
    b = state_trajectory(k0, irregular, M)
    np.testing.assert_allclose(a[:5], b[:5], rtol=1e-12)
    with pytest.raises(InvalidParameterError):
        state_trajectory(k0, [1.0, 0.5], M)
    with pytest.raises(InvalidParameterError):
        state_trajectory(k0, [], M)


def test_harvest_trajectory(single_region_solution):
    """Test c(t) = 0.15 e^(-0.1 t)."""
    times = np.linspace(0.0, 10.0, 11)
    rates = harvest_trajectory([1.0], times, single_region_solution)
    np.testing.assert_allclose(rates[:, 0], 0.15 * np.exp(-0.1 * times), rtol=1e-10)


def test_harvest_trajectory_is_pointwise_asymptotic_rate(solution_factory):
    """Test the definitional identity with state_trajectory."""
    rng = np.random.default_rng(23)
    solution = solution_factory(rng, 4)
    times = np.linspace(0.0, solution.params.horizon, 7)
    k0 = rng.uniform(0.5, 1.5, size=4)
    states, rates = simulate(k0, times, solution)
    for k, c in zip(states, rates):
        np.testing.assert_allclose(c, asymptotic_harvest_rate(k, solution), rtol=1e-12)


def test_finite_horizon_single_region(single_region_solution):
    """Test the exact finite-horizon path against its quadrature-free solution."""
    theta, horizon = 0.15, 10.0
    c2 = 1.0 / theta
    times = np.linspace(0.0, horizon, 11)
    b = (1.0 - c2) * np.exp(-theta * (horizon - times)) + c2
    expected = np.exp(0.05 * times - (times - np.log(b / b[0]) / theta) / c2)
    states, rates = finite_horizon_trajectory([1.0], times, single_region_solution)
    np.testing.assert_allclose(states[:, 0], expected, rtol=1e-8)
    np.testing.assert_allclose(rates[:, 0], states[:, 0] / b, rtol=1e-8)


def test_finite_horizon_approaches_asymptotic_path(single_region_domain):
    """Test that far from T the exact path follows e^(tM) k_0."""
    params = EconomicParams(r=0.1, beta=0.5, horizon=200.0, kappa0=1.0)
    solution = solve(single_region_domain, params)
    times = np.linspace(0.0, 10.0, 6)
    exact, _ = finite_horizon_trajectory([1.0], times, solution)
    asymptotic = state_trajectory([1.0], times, solution.closed_loop)
    np.testing.assert_allclose(exact, asymptotic, rtol=1e-6)


def test_finite_horizon_grid_must_fit_horizon(single_region_solution):
    """Test that grids beyond T are rejected."""
    with pytest.raises(InvalidParameterError):
        finite_horizon_trajectory([1.0], [0.0, 11.0], single_region_solution)
