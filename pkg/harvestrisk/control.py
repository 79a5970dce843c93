"""
Closed-form solution of the spatial harvesting control problem.

The value function, harvest rates and closed-loop dynamics all depend on the
lowest eigenpair (lambda, alpha) of the drift L_G + A_D and on two derived
scalars:

    theta     = (r - lambda (1 - beta)) / beta
    Lambda(a) = sum_i B_i (B_i / D_i)^(-1/beta) a_i^((beta - 1) / beta)
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy import integrate, linalg

from .errors import (
    AsymptoticsInvalidError,
    DegenerateThetaError,
    InvalidParameterError,
    NegativeBracketError,
    NoConvergenceError,
    NonPositiveEigenvectorError,
    NonPositiveStateError,
)
from .spatial import EIGEN_GAP_TOLERANCE, POSITIVITY_TOLERANCE, spectral_solution
from .types import (
    EconomicParams,
    Matrix,
    RateVariant,
    SpatialDomain,
    SpectralSolution,
)

THETA_FLOOR = 1e-12
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12


class ControlSolution(BaseModel):
    """Everything the closed forms need, computed once by ``solve``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: SpatialDomain
    spectral: SpectralSolution
    params: EconomicParams
    theta: float
    lambda_alpha: float
    closed_loop: Optional[Matrix] = None
    rate_variant: RateVariant = RateVariant.PAPER

    @property
    def alpha(self) -> np.ndarray:
        return self.spectral.alpha

    @property
    def rate_scale(self) -> np.ndarray:
        """Diagonal of B-tilde, (B_i / D_i)^(-1/beta)."""
        return rate_scale(self.domain, self.params.beta)


def rate_scale(domain: SpatialDomain, beta: float) -> np.ndarray:
    """(B_i / D_i)^(-1/beta) per region."""
    return (domain.b_diag / domain.d_weights) ** (-1.0 / beta)


def compute_theta(
    params: EconomicParams, lambda_min: float, floor: float = THETA_FLOOR
) -> float:
    """
    theta = (r - lambda (1 - beta)) / beta.

    Raises:
        DegenerateThetaError: If |theta| < floor.
    """
    theta = (params.r - lambda_min * (1.0 - params.beta)) / params.beta
    if abs(theta) < floor:
        raise DegenerateThetaError(
            f"theta = {theta:.3e} vanishes (lambda = r / (1 - beta))",
            details={"theta": theta},
        )
    return float(theta)


def compute_lambda_alpha(
    domain: SpatialDomain, alpha: np.ndarray, beta: float
) -> float:
    """
    Lambda(alpha) = sum_i B_i (B_i/D_i)^(-1/beta) alpha_i^((beta-1)/beta).

    Raises:
        NonPositiveEigenvectorError: If some alpha_i <= 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise NonPositiveEigenvectorError(
            "Lambda(alpha) needs strictly positive alpha",
            details={"alpha": alpha.tolist()},
        )
    terms = domain.b_diag * rate_scale(domain, beta) * alpha ** ((beta - 1.0) / beta)
    return float(np.sum(terms))


def _bracket(t: float, theta: float, lambda_alpha: float, params: EconomicParams) -> float:
    ratio = lambda_alpha / theta
    value = (params.kappa0 - ratio) * np.exp(-theta * (params.horizon - t)) + ratio
    if not value > 0:
        raise NegativeBracketError(
            f"psi_0 bracket is {value:.6g} at t={t}",
            details={"t": t, "bracket": float(value)},
        )
    return float(value)


def bracket(t: float, solution: ControlSolution) -> float:
    """(kappa_0 - Lambda/theta) e^(-theta (T - t)) + Lambda/theta."""
    return _bracket(t, solution.theta, solution.lambda_alpha, solution.params)


def psi0(
    t: float, theta: float, lambda_alpha: float, params: EconomicParams
) -> float:
    """
    psi_0(t) = e^(-rt/(1-beta)) [bracket]^(beta/(1-beta)).

    Raises:
        NegativeBracketError: If the bracket is not positive.
    """
    beta = params.beta
    b = _bracket(t, theta, lambda_alpha, params)
    return float(np.exp(-params.r * t / (1.0 - beta)) * b ** (beta / (1.0 - beta)))


def _alpha_state(k: Sequence[float], alpha: np.ndarray) -> float:
    s = float(np.dot(alpha, np.asarray(k, dtype=float)))
    if not s > 0:
        raise NonPositiveStateError(f"<alpha, k> = {s:.6g} is not positive")
    return s


def value_function(t: float, k: Sequence[float], solution: ControlSolution) -> float:
    """v(t, k) = e^(-rt)/(1-beta) [bracket]^beta <alpha, k>^(1-beta)."""
    beta = solution.params.beta
    s = _alpha_state(k, solution.alpha)
    b = bracket(t, solution)
    return float(
        np.exp(-solution.params.r * t) / (1.0 - beta) * b**beta * s ** (1.0 - beta)
    )


def value_gradient(t: float, k: Sequence[float], solution: ControlSolution) -> np.ndarray:
    """Dv = psi_0^(1-beta) <alpha, k>^(-beta) alpha."""
    beta = solution.params.beta
    s = _alpha_state(k, solution.alpha)
    b = bracket(t, solution)
    return np.exp(-solution.params.r * t) * b**beta * s ** (-beta) * solution.alpha


def harvest_rate(
    t: float,
    k: Sequence[float],
    solution: ControlSolution,
    variant: Optional[RateVariant] = None,
) -> np.ndarray:
    """
    Optimal finite-horizon harvest rates.

    ``PAPER``: c_i = alpha_i (B_i/D_i)^(-1/beta) [bracket]^(-1) <alpha, k>.
    ``FOC``:   c_i = D_i^(-1) e^(-rt/beta) ((B_i/D_i) (Dv)_i)^(-1/beta).
    """
    variant = RateVariant(variant or solution.rate_variant)
    domain = solution.domain
    beta = solution.params.beta
    if variant is RateVariant.PAPER:
        s = _alpha_state(k, solution.alpha)
        return solution.alpha * solution.rate_scale * s / bracket(t, solution)

    grad = value_gradient(t, k, solution)
    marginal = (domain.b_diag / domain.d_weights) * grad
    return (
        np.exp(-solution.params.r * t / beta) * marginal ** (-1.0 / beta) / domain.d_weights
    )


def phi_factor(t: float, solution: ControlSolution) -> float:
    """Phi(t) = [1 + (theta kappa_0 / Lambda - 1) e^(-theta (T - t))]^(-1)."""
    params = solution.params
    excess = solution.theta * params.kappa0 / solution.lambda_alpha - 1.0
    denominator = 1.0 + excess * np.exp(-solution.theta * (params.horizon - t))
    if abs(denominator) < THETA_FLOOR:
        raise NegativeBracketError(
            f"Phi is singular at t={t}", details={"denominator": float(denominator)}
        )
    return float(1.0 / denominator)


def _require_positive_theta(solution: ControlSolution) -> None:
    if solution.theta <= 0:
        raise AsymptoticsInvalidError(
            f"long-horizon rates need theta > 0 (theta = {solution.theta:.6g})"
        )


def asymptotic_harvest_rate(k: Sequence[float], solution: ControlSolution) -> np.ndarray:
    """c_i = (alpha_i theta / Lambda) (B_i/D_i)^(-1/beta) <alpha, k>."""
    _require_positive_theta(solution)
    s = float(np.dot(solution.alpha, np.asarray(k, dtype=float)))
    return solution.theta / solution.lambda_alpha * solution.alpha * solution.rate_scale * s


def closed_loop_matrix(
    domain: SpatialDomain,
    spectral: SpectralSolution,
    theta: float,
    lambda_alpha: float,
    beta: float,
) -> np.ndarray:
    """
    M = (L_G + A_D) - (theta / Lambda) B_D B-tilde A A-tilde.

    The correction is the rank-one matrix (theta / Lambda) u alpha' with
    u_i = B_i (B_i/D_i)^(-1/beta) alpha_i.
    """
    u = domain.b_diag * rate_scale(domain, beta) * spectral.alpha
    return spectral.drift - (theta / lambda_alpha) * np.outer(u, spectral.alpha)


def _is_uniform(times: np.ndarray) -> bool:
    if times.size < 3:
        return True
    steps = np.diff(times)
    return bool(np.allclose(steps, steps[0], rtol=1e-12, atol=0.0))


def check_grid(times: Sequence[float]) -> np.ndarray:
    """Validate a caller-supplied time grid (non-empty, sorted)."""
    grid = np.asarray(times, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidParameterError("time grid is empty")
    if np.any(np.diff(grid) < 0):
        raise InvalidParameterError("time grid must be sorted")
    return grid


def state_trajectory(
    k0: Sequence[float], times: Sequence[float], closed_loop: np.ndarray
) -> np.ndarray:
    """
    k(t) = e^(tM) k_0 on a caller-supplied grid.

    Returns:
        Array of shape (len(times), N).
    """
    grid = check_grid(times)
    k0 = np.asarray(k0, dtype=float)
    M = np.asarray(closed_loop, dtype=float)
    states = np.empty((grid.size, k0.size))
    if _is_uniform(grid) and grid.size > 1:
        states[0] = linalg.expm(grid[0] * M) @ k0
        step = linalg.expm((grid[1] - grid[0]) * M)
        for j in range(1, grid.size):
            states[j] = step @ states[j - 1]
    else:
        for j, t in enumerate(grid):
            states[j] = linalg.expm(t * M) @ k0
    return states


def simulate(
    k0: Sequence[float], times: Sequence[float], solution: ControlSolution
) -> Tuple[np.ndarray, np.ndarray]:
    """States and long-horizon harvest rates along the closed-loop path."""
    _require_positive_theta(solution)
    states = state_trajectory(k0, times, solution.closed_loop)
    weights = solution.theta / solution.lambda_alpha * solution.alpha * solution.rate_scale
    rates = np.outer(states @ solution.alpha, weights)
    return states, rates


def harvest_trajectory(
    k0: Sequence[float], times: Sequence[float], solution: ControlSolution
) -> np.ndarray:
    """c(t) = (theta / Lambda) B-tilde A A-tilde e^(tM) k_0."""
    return simulate(k0, times, solution)[1]


def terminal_payoff(k: Sequence[float], solution: ControlSolution) -> float:
    """g(T, k) = e^(-rT) <E, k>^(1-beta) / (1-beta), E = kappa_0^(beta/(1-beta)) alpha."""
    params = solution.params
    beta = params.beta
    weights = params.kappa0 ** (beta / (1.0 - beta)) * solution.alpha
    s = float(np.dot(weights, np.asarray(k, dtype=float)))
    if not s > 0:
        raise NonPositiveStateError(f"<E, k> = {s:.6g} is not positive")
    return float(np.exp(-params.r * params.horizon) * s ** (1.0 - beta) / (1.0 - beta))


def finite_horizon_trajectory(
    k0: Sequence[float],
    times: Sequence[float],
    solution: ControlSolution,
    variant: Optional[RateVariant] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed loop under the exact finite-horizon rates,
    k' = (L_G + A_D) k - B_D c*(t, k), started from k_0 at t = 0.

    Returns:
        (states, rates), each of shape (len(times), N).
    """
    grid = check_grid(times)
    if grid[0] < 0 or grid[-1] > solution.params.horizon * (1 + 1e-12):
        raise InvalidParameterError("time grid must lie in [0, T]")
    drift = solution.spectral.drift
    b_diag = solution.domain.b_diag

    def rhs(t: float, k: np.ndarray) -> np.ndarray:
        return drift @ k - b_diag * harvest_rate(t, k, solution, variant)

    if grid[-1] > 0:
        result = integrate.solve_ivp(
            rhs,
            (0.0, float(grid[-1])),
            np.asarray(k0, dtype=float),
            method="DOP853",
            t_eval=grid,
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
        )
        if not result.success:
            raise NoConvergenceError(f"ODE integration failed: {result.message}")
        states = result.y.T
    else:
        states = np.tile(np.asarray(k0, dtype=float), (grid.size, 1))
    rates = np.stack([harvest_rate(t, k, solution, variant) for t, k in zip(grid, states)])
    return states, rates


def solve(
    domain: SpatialDomain,
    params: EconomicParams,
    variant: RateVariant = RateVariant.PAPER,
    gap_tolerance: float = EIGEN_GAP_TOLERANCE,
    positivity_tolerance: float = POSITIVITY_TOLERANCE,
    theta_floor: float = THETA_FLOOR,
) -> ControlSolution:
    """
    Compute the spectral data, theta, Lambda(alpha) and M for a domain.

    The psi_0 bracket is monotone in t and equals kappa_0 > 0 at T, so it is
    checked once at t = 0.

    Raises:
        DegenerateEigenvalueError, NonPositiveEigenvectorError,
        DegenerateThetaError, NegativeBracketError.
    """
    spectral = spectral_solution(domain, gap_tolerance, positivity_tolerance)
    theta = compute_theta(params, spectral.lambda_min, theta_floor)
    lambda_alpha = compute_lambda_alpha(domain, spectral.alpha, params.beta)
    _bracket(0.0, theta, lambda_alpha, params)

    closed_loop = None
    if theta > 0:
        closed_loop = closed_loop_matrix(
            domain, spectral, theta, lambda_alpha, params.beta
        )
    else:
        logger.warning(f"theta = {theta:.6g} <= 0: long-horizon formulas unavailable")

    logger.info(
        f"Solved control problem: lambda={spectral.lambda_min:.10g} "
        f"theta={theta:.10g} Lambda={lambda_alpha:.10g}"
    )
    return ControlSolution(
        domain=domain,
        spectral=spectral,
        params=params,
        theta=theta,
        lambda_alpha=lambda_alpha,
        closed_loop=closed_loop,
        rate_variant=RateVariant(variant),
    )
