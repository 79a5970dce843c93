"""
Common types and data structures.

Containers coerce their array fields to read-only float arrays and check
shapes; the semantic invariants (connectivity, simplex weights, PSD
scatters, ...) are enforced by the gatekeepers in ``validation``.
"""

from enum import Enum
from math import isqrt
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)
from typing_extensions import Annotated


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def as_vector(value: Any) -> np.ndarray:
    """Coerce a scalar or sequence into a read-only 1-D float array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got an array of shape {arr.shape}")
    return _frozen(arr)


def as_matrix(value: Any) -> np.ndarray:
    """Coerce a scalar, row-major flat list or nested list into a square matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        side = isqrt(arr.size)
        if side * side != arr.size:
            raise ValueError(
                f"flat matrix of length {arr.size} is not a square number of entries"
            )
        arr = arr.reshape(side, side)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return _frozen(arr)


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


Vector = Annotated[
    np.ndarray, BeforeValidator(as_vector), PlainSerializer(_to_list, return_type=list)
]
Matrix = Annotated[
    np.ndarray, BeforeValidator(as_matrix), PlainSerializer(_to_list, return_type=list)
]

_ARRAY_CONFIG = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")


class SpatialDomain(BaseModel):
    """Discretized domain: N regions, weighted edges and diagonal operators.

    Edges are stored once per unordered pair as ``(i, j, w)`` with ``i < j``.
    Build instances through ``validation.validate_domain``.
    """

    model_config = _ARRAY_CONFIG

    n_regions: int = Field(..., gt=0)
    edges: Tuple[Tuple[int, int, float], ...] = ()
    a_diag: Vector
    b_diag: Vector
    d_weights: Vector
    pi_weights: Vector

    @model_validator(mode="after")
    def _check_lengths(self) -> "SpatialDomain":
        for name in ("a_diag", "b_diag", "d_weights", "pi_weights"):
            if getattr(self, name).shape[0] != self.n_regions:
                raise ValueError(f"{name} must have length {self.n_regions}")
        return self


class SpectralSolution(BaseModel):
    """Lowest eigenpair of the drift matrix L_G + A_D."""

    model_config = _ARRAY_CONFIG

    lambda_min: float
    alpha: Vector
    drift: Matrix
    spectral_gap: Optional[float] = None


class RateVariant(str, Enum):
    """Which closed form to use for the finite-horizon harvest rates."""

    PAPER = "paper"
    FOC = "foc"


class EconomicParams(BaseModel):
    """Discount rate, CRRA elasticity, horizon and the scalar kappa_0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    r: float = Field(..., gt=0)
    beta: float = Field(..., gt=0, lt=1)
    horizon: float = Field(..., gt=0)
    kappa0: float = Field(..., gt=0)


class LocationScatterModel(BaseModel):
    """Location-Scatter probability model LS(m, S).

    ``validation.validate_model`` symmetrizes the scatter and clips rounding
    noise below zero; direct construction only checks shapes.
    """

    model_config = _ARRAY_CONFIG

    mean: Vector
    scatter: Matrix
    family_tag: str = "gaussian"

    @model_validator(mode="after")
    def _check_shapes(self) -> "LocationScatterModel":
        if self.scatter.shape[0] != self.mean.shape[0]:
            raise ValueError(
                f"scatter of shape {self.scatter.shape} does not match "
                f"mean of length {self.mean.shape[0]}"
            )
        return self

    @property
    def dimension(self) -> int:
        return int(self.mean.shape[0])


class PriorSet(BaseModel):
    """Weighted collection of Location-Scatter models for k_0."""

    model_config = _ARRAY_CONFIG

    models: Tuple[LocationScatterModel, ...]
    weights: Vector

    @model_validator(mode="after")
    def _check_sizes(self) -> "PriorSet":
        if not self.models:
            raise ValueError("at least one prior model is required")
        if self.weights.shape[0] != len(self.models):
            raise ValueError("one weight per prior model is required")
        return self

    @property
    def dimension(self) -> int:
        return self.models[0].dimension

    def barycentric_mean(self) -> np.ndarray:
        """m_B = sum_i w_i m_i."""
        return self.weights @ np.stack([m.mean for m in self.models])


class RiskPreferences(BaseModel):
    """Aversion to model ambiguity."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(default=1.0, gt=0)
    no_aversion: bool = False

    @property
    def effective_gamma(self) -> float:
        """gamma, or 0 for the penalty-free limit."""
        return 0.0 if self.no_aversion else self.gamma


class RiskCoefficients(BaseModel):
    """Coefficients of the affine loss L = G <alpha_tilde, k_0>."""

    model_config = _ARRAY_CONFIG

    tilde_alpha: Vector
    g_region: Vector
    g_total: float


class RiskReport(BaseModel):
    """Outcome of the risk pipeline."""

    model_config = _ARRAY_CONFIG

    total_risk: float
    allocations: Vector
    barycenter: LocationScatterModel
    robust_model: LocationScatterModel
    frechet_variance: float
    aggregation_residual: float
    times: Vector
    robust_mean_policy: Annotated[
        np.ndarray,
        BeforeValidator(lambda v: _frozen(np.atleast_2d(np.asarray(v, dtype=float)))),
        PlainSerializer(_to_list, return_type=list),
    ]


class OracleReport(BaseModel):
    """Outcome of one numerical check."""

    model_config = ConfigDict(extra="forbid")

    name: str
    max_abs_error: float
    tolerance: float
    passed: bool
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def build(
        cls,
        name: str,
        max_abs_error: float,
        tolerance: float,
        diagnostics: Optional[Dict[str, Any]] = None,
        consistent: bool = True,
    ) -> "OracleReport":
        """Create a report; ``passed`` is derived, never supplied."""
        diagnostics = dict(diagnostics or {})
        diagnostics.setdefault(
            "regime", "consistent" if consistent else "inconsistent-regime"
        )
        error = float(max_abs_error)
        passed = bool(consistent and np.isfinite(error) and error <= tolerance)
        return cls(
            name=name,
            max_abs_error=error,
            tolerance=float(tolerance),
            passed=passed,
            diagnostics=diagnostics,
        )

    @property
    def asserted(self) -> bool:
        """Whether the report counts towards a pass/fail verdict."""
        return self.diagnostics.get("regime") != "inconsistent-regime"


__all__: List[str] = [
    "EconomicParams",
    "LocationScatterModel",
    "Matrix",
    "OracleReport",
    "PriorSet",
    "RateVariant",
    "RiskCoefficients",
    "RiskPreferences",
    "RiskReport",
    "SpatialDomain",
    "SpectralSolution",
    "Vector",
    "as_matrix",
    "as_vector",
]
