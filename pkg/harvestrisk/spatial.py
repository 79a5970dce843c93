"""
Spatial operators of the discretized domain and their spectral data.
"""

import networkx as nx
import numpy as np
from loguru import logger
from scipy import linalg

from .errors import DegenerateEigenvalueError, NonPositiveEigenvectorError
from .types import SpatialDomain, SpectralSolution
from .validation import domain_graph

EIGEN_GAP_TOLERANCE = 1e-10
POSITIVITY_TOLERANCE = 1e-12


def build_laplacian(domain: SpatialDomain) -> np.ndarray:
    """Graph Laplacian L_G = degree - adjacency of the weighted edge list."""
    graph = domain_graph(domain)
    laplacian = nx.laplacian_matrix(
        graph, nodelist=range(domain.n_regions), weight="weight"
    )
    return np.asarray(laplacian.toarray(), dtype=float)


def drift_matrix(domain: SpatialDomain) -> np.ndarray:
    """Drift operator L_G + A_D of the uncontrolled dynamics."""
    return build_laplacian(domain) + np.diag(domain.a_diag)


def lowest_eigenpair(
    drift: np.ndarray,
    gap_tolerance: float = EIGEN_GAP_TOLERANCE,
    positivity_tolerance: float = POSITIVITY_TOLERANCE,
) -> SpectralSolution:
    """
    Lowest eigenvalue of a symmetric drift matrix with its unit eigenvector.

    The eigenvector is oriented so that its entries sum to a positive number.

    Args:
        drift: Symmetric N x N matrix.
        gap_tolerance: Minimal gap to the second eigenvalue.
        positivity_tolerance: Minimal admissible eigenvector entry.

    Returns:
        SpectralSolution with lambda_min, alpha and the drift.

    Raises:
        DegenerateEigenvalueError: The lowest eigenvalue is not simple.
        NonPositiveEigenvectorError: Some entry of alpha is not positive.
    """
    drift = np.asarray(drift, dtype=float)
    sym = 0.5 * (drift + drift.T)
    eigvals, eigvecs = linalg.eigh(sym)

    gap = float(eigvals[1] - eigvals[0]) if eigvals.size > 1 else None
    if gap is not None and gap < gap_tolerance:
        raise DegenerateEigenvalueError(
            f"lowest eigenvalue {eigvals[0]:.6g} has multiplicity > 1 (gap {gap:.3e})",
            details={"eigenvalues": eigvals[:2].tolist()},
        )

    alpha = eigvecs[:, 0]
    if alpha.sum() < 0:
        alpha = -alpha
    alpha = alpha / np.linalg.norm(alpha)
    if np.any(alpha <= positivity_tolerance):
        raise NonPositiveEigenvectorError(
            "lowest eigenvector has non-positive entries",
            details={"alpha": alpha.tolist()},
        )

    lambda_min = float(eigvals[0])
    residual = float(np.linalg.norm(sym @ alpha - lambda_min * alpha))
    logger.debug(f"lambda_min={lambda_min:.12g} gap={gap} residual={residual:.3e}")
    return SpectralSolution(
        lambda_min=lambda_min, alpha=alpha, drift=drift, spectral_gap=gap
    )


def spectral_solution(
    domain: SpatialDomain,
    gap_tolerance: float = EIGEN_GAP_TOLERANCE,
    positivity_tolerance: float = POSITIVITY_TOLERANCE,
) -> SpectralSolution:
    """Lowest eigenpair of the domain's drift matrix."""
    return lowest_eigenpair(drift_matrix(domain), gap_tolerance, positivity_tolerance)
