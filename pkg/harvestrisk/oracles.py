"""
Independent numerical checks of the closed forms.

Every oracle is deterministic given its inputs (and seed), and takes its
tolerance as a parameter so acceptance runs can tighten it.
"""

from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import integrate

from .config import Tolerances
from .control import (
    ControlSolution,
    harvest_rate,
    harvest_trajectory,
    phi_factor,
    state_trajectory,
    terminal_payoff,
    value_function,
    value_gradient,
)
from .errors import InvalidParameterError
from .risk import (
    aggregation_residual,
    allocate_risk,
    risk_coefficients,
    robust_model,
    sample_initial_states,
    total_risk,
)
from .transport import (
    FixedPointResult,
    barycenter_with_diagnostics,
    frechet_function,
    frechet_penalty,
)
from .types import (
    LocationScatterModel,
    OracleReport,
    PriorSet,
    RateVariant,
    RiskCoefficients,
    RiskPreferences,
)

Utility = Literal["separable", "aggregate"]

SUP_OFFSETS = (0.1, 0.01, 0.001)


def rk4_trajectory(
    k0: Sequence[float], M: np.ndarray, dt: float, horizon: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Classical fourth-order Runge-Kutta integration of k' = M k.

    The step is shrunk to T / ceil(T / dt) so the grid ends exactly at T.

    Returns:
        (times, states) with states of shape (len(times), N).
    """
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    M = np.asarray(M, dtype=float)
    steps = max(1, int(np.ceil(horizon / dt - 1e-9))) if horizon > 0 else 0
    times = np.linspace(0.0, horizon, steps + 1)
    states = np.empty((steps + 1, M.shape[0]))
    states[0] = np.asarray(k0, dtype=float)
    if steps == 0:
        return times, states
    h = horizon / steps
    for n in range(steps):
        k = states[n]
        s1 = M @ k
        s2 = M @ (k + 0.5 * h * s1)
        s3 = M @ (k + 0.5 * h * s2)
        s4 = M @ (k + h * s3)
        states[n + 1] = k + h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
    return times, states


def trajectory_check(
    k0: Sequence[float],
    solution: ControlSolution,
    dt: float = 1e-3,
    tolerance: float = 1e-6,
    horizon: Optional[float] = None,
) -> OracleReport:
    """
    Sup-norm distance between the matrix-exponential path and RK4.

    Each time slice is scaled by max(1, |k(t)|_inf): absolute below unit
    magnitude, relative on the growing modes of the drift.
    """
    horizon = solution.params.horizon if horizon is None else horizon
    times, reference = rk4_trajectory(k0, solution.closed_loop, dt, horizon)
    closed_form = state_trajectory(k0, times, solution.closed_loop)
    scale = np.maximum(1.0, np.max(np.abs(closed_form), axis=1))
    error = float(np.max(np.max(np.abs(closed_form - reference), axis=1) / scale))
    return OracleReport.build(
        "trajectory_vs_rk4",
        error,
        tolerance,
        {"dt": dt, "steps": int(times.size - 1), "horizon": horizon},
    )


def quadrature_loss(
    k0: Sequence[float],
    solution: ControlSolution,
    horizon: Optional[float] = None,
    dt: Optional[float] = None,
) -> float:
    """
    L = -(1/T) sum_i pi_i int_0^T c_i(t; k_0) dt by composite Simpson.

    The default step is 1e-3 T; the panel count is rounded up to an even number.
    """
    horizon = solution.params.horizon if horizon is None else horizon
    if horizon == 0:
        return 0.0
    dt = 1e-3 * horizon if dt is None else dt
    panels = max(2, int(np.ceil(horizon / dt - 1e-9)))
    panels += panels % 2
    grid = np.linspace(0.0, horizon, panels + 1)
    rates = harvest_trajectory(k0, grid, solution)
    integrals = integrate.simpson(rates, x=grid, axis=0)
    return float(-(solution.domain.pi_weights @ integrals) / horizon)


def quadrature_check(
    k0: Sequence[float],
    solution: ControlSolution,
    coeffs: Optional[RiskCoefficients] = None,
    dt_fraction: float = 1e-3,
    tolerance: float = 1e-6,
) -> OracleReport:
    """Closed-form loss G <alpha_tilde, k_0> against Simpson quadrature."""
    coeffs = coeffs or risk_coefficients(solution)
    closed_form = coeffs.g_total * float(coeffs.tilde_alpha @ np.asarray(k0, dtype=float))
    numeric = quadrature_loss(k0, solution, dt=dt_fraction * solution.params.horizon)
    return OracleReport.build(
        "loss_vs_quadrature",
        abs(closed_form - numeric),
        tolerance,
        {"closed_form": closed_form, "quadrature": numeric},
    )


def _utility(
    t: float, c: np.ndarray, solution: ControlSolution, utility: Utility
) -> float:
    beta = solution.params.beta
    d = solution.domain.d_weights
    discount = np.exp(-solution.params.r * t) / (1.0 - beta)
    if utility == "separable":
        return float(discount * np.sum(d * c ** (1.0 - beta)))
    return float(discount * float(d @ c) ** (1.0 - beta))


def hamiltonian_maximizer(
    t: float, k: Sequence[float], solution: ControlSolution, utility: Utility = "separable"
) -> Optional[np.ndarray]:
    """Harvest rates maximizing the HJB Hamiltonian at (t, k).

    ``None`` when the aggregate first-order system is over-determined (N > 1).
    """
    domain = solution.domain
    beta = solution.params.beta
    marginal = np.exp(solution.params.r * t) * (domain.b_diag / domain.d_weights) * (
        value_gradient(t, k, solution)
    )
    if utility == "separable":
        return marginal ** (-1.0 / beta)
    if domain.n_regions == 1:
        return marginal ** (-1.0 / beta) / domain.d_weights
    return None


def foc_residual(
    t: float,
    k: Sequence[float],
    solution: ControlSolution,
    variant: Optional[RateVariant] = None,
    utility: Utility = "separable",
) -> np.ndarray:
    """
    Stationarity residual of the Hamiltonian at the variant's rates.

    separable: e^(-rt) D_i c_i^(-beta) - B_i (Dv)_i
    aggregate: e^(-rt) D_i <D, c>^(-beta) - B_i (Dv)_i
    """
    c = harvest_rate(t, k, solution, variant)
    grad = value_gradient(t, k, solution)
    domain = solution.domain
    beta = solution.params.beta
    discount = np.exp(-solution.params.r * t)
    if utility == "separable":
        marginal_utility = discount * domain.d_weights * c ** (-beta)
    else:
        marginal_utility = discount * domain.d_weights * float(domain.d_weights @ c) ** (-beta)
    return marginal_utility - domain.b_diag * grad


def _regime_consistent(
    rates: np.ndarray, maximizer: Optional[np.ndarray], rtol: float = 1e-10
) -> bool:
    return maximizer is not None and bool(np.allclose(rates, maximizer, rtol=rtol, atol=0.0))


def _check_interior(
    solution: ControlSolution, states: np.ndarray, times: np.ndarray
) -> None:
    horizon = solution.params.horizon
    if np.any(times <= 0) or np.any(times >= horizon):
        raise InvalidParameterError("time grid must lie strictly inside (0, T)")
    if np.any(states <= 0):
        raise InvalidParameterError("state grid must lie in the positive orthant")


def hjb_residual(
    solution: ControlSolution,
    states: Sequence[Sequence[float]],
    times: Sequence[float],
    variant: Optional[RateVariant] = None,
    utility: Utility = "separable",
    fd_step_fraction: float = 1e-5,
    tolerance: float = 1e-6,
) -> OracleReport:
    """
    Residual of -dv/dt = <(L_G + A_D) k, Dv> - sum_i B_i c_i (Dv)_i + U(t, c)
    on a (time x state) grid, with analytic Dv and a central difference in t.

    The terminal slice |v(T, k) - g(T, k)| is folded into the error. When the
    variant's rates are not the Hamiltonian maximizer the report is flagged
    ``inconsistent-regime`` and never passes.
    """
    variant = RateVariant(variant or solution.rate_variant)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    times = np.asarray(times, dtype=float).reshape(-1)
    _check_interior(solution, states, times)

    horizon = solution.params.horizon
    step = fd_step_fraction * horizon
    drift = solution.spectral.drift
    b_diag = solution.domain.b_diag

    worst = 0.0
    worst_point = None
    consistent = True
    for t in times:
        for k in states:
            rates = harvest_rate(t, k, solution, variant)
            grad = value_gradient(t, k, solution)
            dv_dt = (
                value_function(t + step, k, solution) - value_function(t - step, k, solution)
            ) / (2.0 * step)
            hamiltonian = (
                float((drift @ k) @ grad)
                - float(np.sum(b_diag * rates * grad))
                + _utility(t, rates, solution, utility)
            )
            residual = abs(dv_dt + hamiltonian)
            if residual > worst:
                worst, worst_point = residual, (float(t), k.tolist())
            consistent = consistent and _regime_consistent(
                rates, hamiltonian_maximizer(t, k, solution, utility)
            )

    terminal_error = max(
        abs(value_function(horizon, k, solution) - terminal_payoff(k, solution))
        for k in states
    )
    if not consistent:
        logger.warning(
            f"HJB residual for variant {variant.value!r} is diagnostic only: "
            "rates are not the Hamiltonian maximizer"
        )
    return OracleReport.build(
        "hjb_residual",
        max(worst, terminal_error),
        tolerance,
        {
            "variant": variant.value,
            "utility": utility,
            "max_residual": worst,
            "worst_point": worst_point,
            "terminal_error": terminal_error,
            "grid": [int(times.size), int(states.shape[0])],
        },
        consistent=consistent,
    )


def foc_check(
    solution: ControlSolution,
    states: Sequence[Sequence[float]],
    times: Sequence[float],
    variant: Optional[RateVariant] = None,
    utility: Utility = "separable",
    tolerance: float = 1e-10,
) -> OracleReport:
    """Largest first-order-condition residual over a grid, relative to B_i (Dv)_i."""
    variant = RateVariant(variant or solution.rate_variant)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    times = np.asarray(times, dtype=float).reshape(-1)
    _check_interior(solution, states, times)

    worst = 0.0
    consistent = True
    for t in times:
        for k in states:
            residual = foc_residual(t, k, solution, variant, utility)
            scale = np.abs(solution.domain.b_diag * value_gradient(t, k, solution))
            worst = max(worst, float(np.max(np.abs(residual) / scale)))
            consistent = consistent and _regime_consistent(
                harvest_rate(t, k, solution, variant),
                hamiltonian_maximizer(t, k, solution, utility),
            )
    return OracleReport.build(
        "foc_residual",
        worst,
        tolerance,
        {"variant": variant.value, "utility": utility},
        consistent=consistent,
    )


def mc_expected_loss(
    model: LocationScatterModel, coeffs: RiskCoefficients, samples: int, seed: int
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of E_Q[L] with its standard error.

    Identical (seed, samples) give bit-identical results.
    """
    if samples < 1:
        raise InvalidParameterError("samples must be at least 1")
    if not np.any(model.scatter):
        return coeffs.g_total * float(coeffs.tilde_alpha @ model.mean), 0.0
    k0 = sample_initial_states(model, samples, seed)
    losses = coeffs.g_total * (k0 @ coeffs.tilde_alpha)
    error = float(losses.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(losses.mean()), error


def mc_check(
    model: LocationScatterModel,
    coeffs: RiskCoefficients,
    samples: int,
    seed: int,
    sigmas: float = 3.0,
) -> OracleReport:
    """Closed-form E_Q[L] against a seeded Monte Carlo estimate."""
    expected = coeffs.g_total * float(coeffs.tilde_alpha @ model.mean)
    estimate, standard_error = mc_expected_loss(model, coeffs, samples, seed)
    tolerance = sigmas * standard_error if standard_error > 0 else 1e-12 * max(1.0, abs(expected))
    return OracleReport.build(
        "expected_loss_vs_monte_carlo",
        abs(estimate - expected),
        tolerance,
        {
            "expected": expected,
            "estimate": estimate,
            "standard_error": standard_error,
            "samples": samples,
            "seed": seed,
        },
    )


def risk_objective(
    model: LocationScatterModel,
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    center: Optional[LocationScatterModel] = None,
) -> float:
    """E_Q[L] - F(Q) / (2 gamma); in the no-aversion limit only Q_B is admissible."""
    expected = coeffs.g_total * float(coeffs.tilde_alpha @ model.mean)
    penalty = frechet_penalty(model, priors, center)
    gamma = prefs.effective_gamma
    if gamma == 0:
        return expected if penalty <= 1e-12 else float("-inf")
    return expected - penalty / (2.0 * gamma)


def sup_check(
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    offsets: Sequence[float] = SUP_OFFSETS,
    tolerance: float = 1e-8,
    center: Optional[LocationScatterModel] = None,
) -> OracleReport:
    """
    Check that Q* maximizes the risk objective over location offsets
    (scatter held at S_B) and that its value equals the closed-form risk.
    """
    if center is None:
        center = barycenter_with_diagnostics(priors)[0]
    q_star = robust_model(coeffs, priors, prefs, center)
    peak = risk_objective(q_star, coeffs, priors, prefs, center)
    closed_form = total_risk(coeffs, priors, prefs)

    margins = []
    for i in range(q_star.dimension):
        for delta in offsets:
            for sign in (1.0, -1.0):
                shifted = q_star.mean.copy()
                shifted[i] += sign * delta
                candidate = LocationScatterModel(
                    mean=shifted, scatter=q_star.scatter, family_tag=q_star.family_tag
                )
                margins.append(peak - risk_objective(candidate, coeffs, priors, prefs, center))
    worst_margin = min(margins) if margins else 0.0
    error = max(abs(peak - closed_form), max(0.0, -worst_margin))
    return OracleReport.build(
        "risk_supremum",
        error,
        tolerance * max(1.0, abs(closed_form)),
        {
            "objective_at_robust_model": peak,
            "total_risk": closed_form,
            "margins": margins,
        },
    )


def euler_check(
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    step: float = 1e-6,
    tolerance: float = 1e-7,
) -> OracleReport:
    """Central difference of h -> rho(L + h L_j) at 0 against the Euler allocation."""

    def risk_at(h: float, j: int) -> float:
        bumped = RiskCoefficients(
            tilde_alpha=coeffs.tilde_alpha,
            g_region=coeffs.g_region,
            g_total=coeffs.g_total + h * float(coeffs.g_region[j]),
        )
        return total_risk(bumped, priors, prefs)

    errors = []
    for j in range(coeffs.g_region.shape[0]):
        derivative = (risk_at(step, j) - risk_at(-step, j)) / (2.0 * step)
        allocated = allocate_risk(coeffs, priors, prefs, j)
        errors.append(abs(derivative - allocated) / max(1.0, abs(allocated)))
    return OracleReport.build(
        "euler_allocation", max(errors), tolerance, {"step": step, "errors": errors}
    )


def aggregation_check(
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    pi_weights: Sequence[float],
    tolerance: float = 1e-10,
) -> OracleReport:
    """Euler aggregation identity, relative to max(1, |rho(L)|)."""
    residual = aggregation_residual(coeffs, priors, prefs, pi_weights)
    scale = max(1.0, abs(total_risk(coeffs, priors, prefs)))
    return OracleReport.build(
        "allocation_aggregation", abs(residual) / scale, tolerance, {"residual": residual}
    )


def barycenter_checks(
    priors: PriorSet,
    tolerance: float = 1e-10,
    optimality_tolerance: float = 1e-8,
    epsilon: float = 1e-3,
    trials: int = 8,
    seed: int = 0,
    max_iter: int = 500,
    fixed_point: Optional[Tuple[LocationScatterModel, FixedPointResult]] = None,
) -> List[OracleReport]:
    """Fixed-point residual and first-order optimality of the barycenter.

    ``fixed_point`` reuses a barycenter already computed for ``priors``.
    """
    if fixed_point is None:
        fixed_point = barycenter_with_diagnostics(priors, tolerance, max_iter)
    center, result = fixed_point
    base = frechet_function(center, priors)
    rng = np.random.default_rng(seed)
    dim = center.dimension
    violation = 0.0
    for _ in range(trials):
        direction = rng.standard_normal((dim, dim))
        congruence = np.eye(dim) + epsilon * direction
        for sign in (1.0, -1.0):
            perturbed = LocationScatterModel(
                mean=center.mean + sign * epsilon * rng.standard_normal(dim),
                scatter=congruence @ center.scatter @ congruence.T,
            )
            violation = max(violation, base - frechet_function(perturbed, priors))
    return [
        OracleReport.build(
            "barycenter_fixed_point",
            result.residual,
            tolerance,
            {"iterations": result.iterations, "regularized": result.regularized},
        ),
        OracleReport.build(
            "barycenter_optimality",
            max(violation, 0.0),
            optimality_tolerance,
            {"frechet_variance": base, "trials": trials, "epsilon": epsilon},
        ),
    ]


def phi_bound_check(
    solution: ControlSolution, times: Sequence[float], tolerance: float = 1e-12
) -> OracleReport:
    """
    |Phi(t) - 1| <= |theta kappa_0 / Lambda - 1| e^(-theta (T - t)) / min(1, theta kappa_0 / Lambda)

    for theta > 0. The denominator is 1 when theta kappa_0 >= Lambda.
    """
    params = solution.params
    ratio = solution.theta * params.kappa0 / solution.lambda_alpha
    excess = abs(ratio - 1.0)
    floor = min(1.0, ratio)
    worst = 0.0
    for t in np.asarray(times, dtype=float):
        bound = excess * np.exp(-solution.theta * (params.horizon - t)) / floor
        gap = abs(phi_factor(t, solution) - 1.0) - bound
        worst = max(worst, gap / max(1.0, bound))
    return OracleReport.build(
        "phi_bound", max(worst, 0.0), tolerance, {"excess": excess, "ratio": ratio}
    )


def default_state_grid(dimension: int, points: int = 5) -> np.ndarray:
    """Positive states (1 + j/4) * ones(N), j = 0..points-1."""
    return np.stack([(1.0 + 0.25 * j) * np.ones(dimension) for j in range(points)])


def run_suite(
    solution: ControlSolution,
    priors: PriorSet,
    prefs: RiskPreferences,
    seed: int,
    tolerances: Optional[Tolerances] = None,
    progress: Optional[Callable[[OracleReport], None]] = None,
) -> List[OracleReport]:
    """Run every oracle that applies to the scenario.

    Long-horizon checks are skipped when theta <= 0.
    """
    tol = tolerances or Tolerances()
    horizon = solution.params.horizon
    interior_times = np.linspace(0.1 * horizon, 0.9 * horizon, 9)
    states = default_state_grid(solution.domain.n_regions)
    reports: List[OracleReport] = []

    def record(report: OracleReport) -> None:
        reports.append(report)
        logger.info(
            f"{report.name}: error={report.max_abs_error:.3e} "
            f"tolerance={report.tolerance:.1e} passed={report.passed}"
        )
        if progress:
            progress(report)

    record(
        hjb_residual(
            solution, states, interior_times,
            fd_step_fraction=tol.fd_step_fraction, tolerance=tol.hjb,
        )
    )
    record(foc_check(solution, states, interior_times, tolerance=tol.foc))
    fixed_point = barycenter_with_diagnostics(
        priors, tol.barycenter_residual, tol.barycenter_max_iter
    )
    center = fixed_point[0]
    for report in barycenter_checks(
        priors,
        tol.barycenter_residual,
        tol.sup,
        seed=seed,
        max_iter=tol.barycenter_max_iter,
        fixed_point=fixed_point,
    ):
        record(report)

    if solution.theta <= 0:
        logger.warning("theta <= 0: skipping long-horizon and risk oracles")
        return reports

    record(phi_bound_check(solution, np.linspace(0.0, horizon, 21)))
    coeffs = risk_coefficients(solution)
    k0 = center.mean
    record(trajectory_check(k0, solution, tol.rk4_dt, tol.trajectory))
    record(quadrature_check(k0, solution, coeffs, tol.quadrature_dt_fraction, tol.quadrature))
    record(aggregation_check(coeffs, priors, prefs, solution.domain.pi_weights, tol.aggregation))
    record(euler_check(coeffs, priors, prefs, tolerance=tol.euler))
    record(sup_check(coeffs, priors, prefs, tolerance=tol.sup, center=center))
    q_star = robust_model(coeffs, priors, prefs, center)
    record(mc_check(q_star, coeffs, tol.mc_samples, seed, tol.mc_sigmas))
    return reports
