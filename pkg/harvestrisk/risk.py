"""
Wasserstein-barycentric risk of the harvest loss.

The loss L = -(1/T) sum_i pi_i int_0^T c_i(t; k_0) dt is affine in the
uncertain initial state, L = G <alpha_tilde, k_0>, so under a prior set of
Location-Scatter models the risk, its Euler allocation and the maximizing
(robust) model are available in closed form.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from .control import ControlSolution, check_grid, simulate, state_trajectory
from .errors import AsymptoticsInvalidError, InvalidParameterError
from .transport import (
    BARYCENTER_MAX_ITER,
    BARYCENTER_TOLERANCE,
    barycenter,
    frechet_variance,
    sqrtm_psd,
)
from .types import (
    LocationScatterModel,
    PriorSet,
    RiskCoefficients,
    RiskPreferences,
    RiskReport,
)

# cond(M) * eps stays below 1e-11 on the inverse form.
CONDITION_LIMIT = 1e4


def expm_integral(M: np.ndarray, horizon: float) -> np.ndarray:
    """J(T) = int_0^T e^(tM) dt.

    Uses (e^(TM) - I) M^-1 when M is well conditioned, otherwise the
    top-right block of exp(T [[M, I], [0, 0]]).
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if horizon == 0:
        return np.zeros((n, n))
    if np.linalg.cond(M) < CONDITION_LIMIT:
        shifted = linalg.expm(horizon * M) - np.eye(n)
        # (e^{TM} - I) M^{-1} = (M^{-T} (e^{TM} - I)^T)^T
        return linalg.solve(M.T, shifted.T).T
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = M
    block[:n, n:] = np.eye(n)
    return linalg.expm(horizon * block)[:n, n:]


def integral_adjoint(M: np.ndarray, horizon: float, alpha: Sequence[float]) -> np.ndarray:
    """alpha_tilde = -J(T)' alpha with J(T) = int_0^T e^(tM) dt."""
    return -expm_integral(M, horizon).T @ np.asarray(alpha, dtype=float)


def risk_coefficients(
    solution: ControlSolution, horizon: Optional[float] = None
) -> RiskCoefficients:
    """
    alpha_tilde, G_i = alpha_i theta (B_i/D_i)^(-1/beta) / (T Lambda) and
    G = sum_j pi_j G_j.

    Raises:
        AsymptoticsInvalidError: If theta <= 0.
    """
    if solution.theta <= 0:
        raise AsymptoticsInvalidError(
            f"risk mapping needs theta > 0 (theta = {solution.theta:.6g})"
        )
    horizon = solution.params.horizon if horizon is None else horizon
    if horizon <= 0:
        raise InvalidParameterError("horizon must be positive")
    tilde_alpha = integral_adjoint(solution.closed_loop, horizon, solution.alpha)
    g_region = (
        solution.alpha
        * solution.theta
        * solution.rate_scale
        / (horizon * solution.lambda_alpha)
    )
    g_total = float(solution.domain.pi_weights @ g_region)
    return RiskCoefficients(tilde_alpha=tilde_alpha, g_region=g_region, g_total=g_total)


def _penalty_scale(coeffs: RiskCoefficients) -> float:
    """G^2 |alpha_tilde|^2."""
    return coeffs.g_total**2 * float(coeffs.tilde_alpha @ coeffs.tilde_alpha)


def total_risk(
    coeffs: RiskCoefficients, priors: PriorSet, prefs: RiskPreferences
) -> float:
    """rho_W(L) = G <alpha_tilde, m_B> + (gamma/2) G^2 |alpha_tilde|^2."""
    location = coeffs.g_total * float(coeffs.tilde_alpha @ priors.barycentric_mean())
    return location + 0.5 * prefs.effective_gamma * _penalty_scale(coeffs)


def allocate_risk(
    coeffs: RiskCoefficients, priors: PriorSet, prefs: RiskPreferences, j: int
) -> float:
    """
    Euler contribution of region ``j`` (0-based):
    rho_W(L_j | L) = G_j <alpha_tilde, m_B> + gamma G G_j |alpha_tilde|^2.
    """
    if not 0 <= j < coeffs.g_region.shape[0]:
        raise InvalidParameterError(f"region index {j} out of range")
    g_j = float(coeffs.g_region[j])
    norm_sq = float(coeffs.tilde_alpha @ coeffs.tilde_alpha)
    return (
        g_j * float(coeffs.tilde_alpha @ priors.barycentric_mean())
        + prefs.effective_gamma * coeffs.g_total * g_j * norm_sq
    )


def allocations(
    coeffs: RiskCoefficients, priors: PriorSet, prefs: RiskPreferences
) -> np.ndarray:
    """Euler contributions of every region."""
    return np.array(
        [allocate_risk(coeffs, priors, prefs, j) for j in range(coeffs.g_region.shape[0])]
    )


def aggregation_residual(
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    pi_weights: Sequence[float],
) -> float:
    """sum_j pi_j rho(L_j|L) - rho(L) - (gamma/2) G^2 |alpha_tilde|^2; zero in exact arithmetic."""
    weighted = float(np.asarray(pi_weights) @ allocations(coeffs, priors, prefs))
    return (
        weighted
        - total_risk(coeffs, priors, prefs)
        - 0.5 * prefs.effective_gamma * _penalty_scale(coeffs)
    )


def robust_model(
    coeffs: RiskCoefficients,
    priors: PriorSet,
    prefs: RiskPreferences,
    center: Optional[LocationScatterModel] = None,
) -> LocationScatterModel:
    """Q* = LS(m_B + gamma G alpha_tilde, S_B)."""
    center = center if center is not None else barycenter(priors)
    shift = prefs.effective_gamma * coeffs.g_total * coeffs.tilde_alpha
    return LocationScatterModel(
        mean=center.mean + shift, scatter=center.scatter, family_tag=center.family_tag
    )


def loss_distribution(
    model: LocationScatterModel, coeffs: RiskCoefficients
) -> LocationScatterModel:
    """Law of L = G <alpha_tilde, k_0> for k_0 ~ LS(m, S), a 1-D LS model."""
    direction = coeffs.g_total * coeffs.tilde_alpha
    return LocationScatterModel(
        mean=[float(direction @ model.mean)],
        scatter=[[float(direction @ model.scatter @ direction)]],
        family_tag=model.family_tag,
    )


def sample_initial_states(
    model: LocationScatterModel, count: int, seed: int
) -> np.ndarray:
    """Draw ``count`` initial states from the Gaussian representative of ``model``."""
    if count < 1:
        raise InvalidParameterError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((count, model.dimension))
    return model.mean + noise @ sqrtm_psd(model.scatter)


class RobustPolicy:
    """Harvest policy driven by initial states distributed as Q*.

    The mean path is the policy at m*; sampled paths come from Gaussian draws
    of k_0, each sampler call owning its own generator.
    """

    def __init__(
        self,
        solution: ControlSolution,
        model: LocationScatterModel,
        times: Sequence[float],
    ):
        self.solution = solution
        self.model = model
        self.times = check_grid(times)
        self.mean_states, self.mean_path = simulate(model.mean, self.times, solution)
        self._weights = (
            solution.theta / solution.lambda_alpha * solution.alpha * solution.rate_scale
        )
        # Row t of the loading matrix maps k_0 to <alpha, e^{tM} k_0>.
        identity = np.eye(model.dimension)
        propagated = np.stack(
            [state_trajectory(e, self.times, solution.closed_loop) for e in identity],
            axis=-1,
        )
        self._loadings = np.einsum("tij,i->tj", propagated, solution.alpha)

    def sample_paths(self, count: int, seed: int) -> np.ndarray:
        """Sampled rate paths, shape (count, len(times), N)."""
        k0 = sample_initial_states(self.model, count, seed)
        scalar = k0 @ self._loadings.T
        return scalar[:, :, None] * self._weights[None, None, :]

    def summary(self, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """Sample mean path and componentwise standard errors."""
        k0 = sample_initial_states(self.model, count, seed)
        scalar = k0 @ self._loadings.T
        mean = scalar.mean(axis=0)
        spread = np.zeros_like(mean)
        if count > 1:
            spread = scalar.std(axis=0, ddof=1) / np.sqrt(count)
        return np.outer(mean, self._weights), np.outer(spread, self._weights)


def robust_policy(
    coeffs: RiskCoefficients,
    solution: ControlSolution,
    prefs: RiskPreferences,
    priors: PriorSet,
    times: Sequence[float],
    center: Optional[LocationScatterModel] = None,
) -> RobustPolicy:
    """Robust harvest policy c(t) = (theta/Lambda) B-tilde A A-tilde e^(tM) k_0, k_0 ~ Q*."""
    return RobustPolicy(solution, robust_model(coeffs, priors, prefs, center), times)


def risk_report(
    solution: ControlSolution,
    priors: PriorSet,
    prefs: RiskPreferences,
    times: Sequence[float],
    tolerance: float = BARYCENTER_TOLERANCE,
    max_iter: int = BARYCENTER_MAX_ITER,
) -> RiskReport:
    """Run the full risk pipeline for one solution and prior set."""
    coeffs = risk_coefficients(solution)
    center = barycenter(priors, tolerance, max_iter)
    policy = robust_policy(coeffs, solution, prefs, priors, times, center)
    total = total_risk(coeffs, priors, prefs)
    logger.info(f"Total harvest risk {total:.12g} (G={coeffs.g_total:.6g})")
    return RiskReport(
        total_risk=total,
        allocations=allocations(coeffs, priors, prefs),
        barycenter=center,
        robust_model=policy.model,
        frechet_variance=frechet_variance(priors, center),
        aggregation_residual=aggregation_residual(
            coeffs, priors, prefs, solution.domain.pi_weights
        ),
        times=policy.times,
        robust_mean_policy=policy.mean_path,
    )
