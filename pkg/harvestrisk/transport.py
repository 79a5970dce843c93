"""
Quadratic Wasserstein geometry of Location-Scatter models.

W2 between LS(m1, S1) and LS(m2, S2) has the closed form

    |m1 - m2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)

and the barycenter scatter is the fixed point of
S = sum_i w_i (S^1/2 S_i S^1/2)^1/2.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from .errors import (
    DimensionMismatchError,
    NoConvergenceError,
    NonPSDError,
    SingularIterateError,
)
from .types import LocationScatterModel, PriorSet

PSD_CLIP = 1e-12
BARYCENTER_TOLERANCE = 1e-10
BARYCENTER_MAX_ITER = 500
REGULARIZATION = 1e-12


def _eigh_psd(matrix: np.ndarray, clip: float = PSD_CLIP) -> Tuple[np.ndarray, np.ndarray]:
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(eigvals))) if eigvals.size else 1.0)
    if eigvals.size and eigvals[0] < -clip * scale:
        raise NonPSDError(f"matrix has negative eigenvalue {eigvals[0]:.3e}")
    return np.clip(eigvals, 0.0, None), eigvecs


def sqrtm_psd(matrix: np.ndarray, clip: float = PSD_CLIP) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Raises:
        NonPSDError: If an eigenvalue is below -clip (relative to scale).
    """
    eigvals, eigvecs = _eigh_psd(np.asarray(matrix, dtype=float), clip)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


def _check_pair(q1: LocationScatterModel, q2: LocationScatterModel) -> None:
    if q1.dimension != q2.dimension:
        raise DimensionMismatchError(
            f"models of dimension {q1.dimension} and {q2.dimension}"
        )


def _bures_cross(s1: np.ndarray, s2: np.ndarray) -> float:
    root = sqrtm_psd(s1)
    return float(np.trace(sqrtm_psd(root @ s2 @ root)))


def wasserstein2_distance(q1: LocationScatterModel, q2: LocationScatterModel) -> float:
    """
    Squared quadratic Wasserstein distance between two LS models.

    The cross term is averaged over both argument orders so the result is
    exactly symmetric.

    Raises:
        DimensionMismatchError: Models of different dimension.
        NonPSDError: A scatter is not PSD.
    """
    _check_pair(q1, q2)
    diff = q1.mean - q2.mean
    cross = 0.5 * (
        _bures_cross(q1.scatter, q2.scatter) + _bures_cross(q2.scatter, q1.scatter)
    )
    value = float(np.dot(diff, diff)) + float(np.trace(q1.scatter + q2.scatter)) - 2.0 * cross
    return max(value, 0.0)


@dataclass
class FixedPointResult:
    """Outcome of the barycenter scatter iteration."""

    scatter: np.ndarray
    iterations: int
    residual: float
    regularized: int = 0


def _fixed_point_map(
    scatter: np.ndarray, scatters: Sequence[np.ndarray], weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    eigvals, eigvecs = _eigh_psd(scatter)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    root = 0.5 * (root + root.T)
    image = sum(w * sqrtm_psd(root @ s @ root) for w, s in zip(weights, scatters))
    return image, eigvals, eigvecs


def barycenter_scatter(
    scatters: Sequence[np.ndarray],
    weights: np.ndarray,
    tolerance: float = BARYCENTER_TOLERANCE,
    max_iter: int = BARYCENTER_MAX_ITER,
) -> FixedPointResult:
    """
    Solve S = sum_i w_i (S^1/2 S_i S^1/2)^1/2 by the fixed-point scheme

        S <- S^-1/2 (sum_i w_i (S^1/2 S_i S^1/2)^1/2)^2 S^-1/2

    started at sum_i w_i S_i.

    Raises:
        NoConvergenceError: Residual above tolerance after max_iter updates.
        SingularIterateError: An iterate stays singular after regularization.
    """
    scatters = [np.asarray(s, dtype=float) for s in scatters]
    weights = np.asarray(weights, dtype=float)
    current = sum(w * s for w, s in zip(weights, scatters))
    dim = current.shape[0]
    regularized = 0

    for iteration in range(max_iter + 1):
        image, eigvals, eigvecs = _fixed_point_map(current, scatters, weights)
        residual = float(np.linalg.norm(current - image, "fro"))
        if residual <= tolerance:
            logger.debug(
                f"Barycenter converged after {iteration} iterations "
                f"(residual {residual:.3e})"
            )
            return FixedPointResult(current, iteration, residual, regularized)
        if iteration == max_iter:
            break

        scale = max(1.0, float(eigvals[-1]))
        if eigvals[0] <= REGULARIZATION * scale:
            regularized += 1
            logger.warning(
                f"Barycenter iterate {iteration} lost rank; adding {REGULARIZATION:g} I"
            )
            current = current + REGULARIZATION * np.eye(dim)
            image, eigvals, eigvecs = _fixed_point_map(current, scatters, weights)
            if eigvals[0] <= 0:
                raise SingularIterateError(
                    f"iterate {iteration} is singular after regularization"
                )
        inv_root = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
        updated = inv_root @ image @ image @ inv_root
        current = 0.5 * (updated + updated.T)

    raise NoConvergenceError(
        f"barycenter did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})",
        details={"residual": residual, "iterations": max_iter},
    )


def barycenter(
    priors: PriorSet,
    tolerance: float = BARYCENTER_TOLERANCE,
    max_iter: int = BARYCENTER_MAX_ITER,
) -> LocationScatterModel:
    """Wasserstein barycenter (Frechet mean) Q_B of a prior set."""
    return barycenter_with_diagnostics(priors, tolerance, max_iter)[0]


def barycenter_with_diagnostics(
    priors: PriorSet,
    tolerance: float = BARYCENTER_TOLERANCE,
    max_iter: int = BARYCENTER_MAX_ITER,
) -> Tuple[LocationScatterModel, FixedPointResult]:
    """Barycenter together with the fixed-point iteration record."""
    result = barycenter_scatter(
        [m.scatter for m in priors.models], priors.weights, tolerance, max_iter
    )
    model = LocationScatterModel(
        mean=priors.barycentric_mean(),
        scatter=result.scatter,
        family_tag=priors.models[0].family_tag,
    )
    return model, result


def frechet_function(model: LocationScatterModel, priors: PriorSet) -> float:
    """sum_i w_i W2^2(Q, Q_i)."""
    return float(
        sum(w * wasserstein2_distance(model, q) for w, q in zip(priors.weights, priors.models))
    )


def frechet_variance(
    priors: PriorSet, center: Optional[LocationScatterModel] = None
) -> float:
    """V = minimum of the Frechet function, attained at the barycenter."""
    center = center if center is not None else barycenter(priors)
    return frechet_function(center, priors)


def frechet_penalty(
    model: LocationScatterModel,
    priors: PriorSet,
    center: Optional[LocationScatterModel] = None,
) -> float:
    """F(Q) = Frechet function at Q minus the Frechet variance."""
    center = center if center is not None else barycenter(priors)
    return frechet_function(model, priors) - frechet_function(center, priors)
