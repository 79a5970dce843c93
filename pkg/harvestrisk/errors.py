"""
Exception hierarchy for harvestrisk.

Validation failures (bad scenario input) and numerical failures (a parameter
regime where a closed form is undefined) are kept apart so the CLI can map
them onto distinct exit codes.
"""

from typing import Any, Dict, Optional

# Malformed invocation (unknown subcommand or option).
EXIT_USAGE = 64


class HarvestRiskError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.field = field
        self.details = details or {}

    def with_prefix(self, prefix: str) -> "HarvestRiskError":
        """Prepend a scenario section to the offending field path."""
        self.field = f"{prefix}.{self.field}" if self.field else prefix
        return self

    def __str__(self) -> str:
        if self.field:
            return f"{self.field}: {self.message}"
        return self.message


class InvalidInputError(HarvestRiskError, ValueError):
    """Input failed validation."""

    exit_code = 2


class SchemaError(InvalidInputError):
    """A scenario field is missing, unknown or of the wrong shape."""


class ScenarioIOError(InvalidInputError):
    """The scenario file could not be read or decoded."""


class AsymmetricWeightsError(InvalidInputError):
    """Edge (i, j) and edge (j, i) carry different weights."""


class NegativeWeightError(InvalidInputError):
    """An edge weight is negative."""


class SelfLoopError(InvalidInputError):
    """An edge connects a region to itself."""


class DisconnectedGraphError(InvalidInputError):
    """Some region cannot be reached from the others."""


class NonPositiveOperatorError(InvalidInputError):
    """Some B_D or D entry is not strictly positive."""


class BadSimplexError(InvalidInputError):
    """A weight vector is not a probability vector."""


class DimensionMismatchError(InvalidInputError):
    """Vectors or matrices of incompatible sizes were combined."""


class NonPSDError(InvalidInputError):
    """A scatter matrix is not symmetric positive semi-definite."""


class InvalidParameterError(InvalidInputError):
    """An economic or preference parameter is outside its admissible range."""


class NumericalError(HarvestRiskError, ArithmeticError):
    """A closed form is undefined in the requested parameter regime."""

    exit_code = 1


class DegenerateEigenvalueError(NumericalError):
    """The lowest eigenvalue of the drift is not simple."""


class NonPositiveEigenvectorError(NumericalError):
    """The lowest eigenvector has a non-positive entry."""


class DegenerateThetaError(NumericalError):
    """theta vanishes, so psi_0 is undefined."""


class NegativeBracketError(NumericalError):
    """The psi_0 bracket is not positive."""


class NonPositiveStateError(NumericalError):
    """<alpha, k> is not positive."""


class AsymptoticsInvalidError(NumericalError):
    """Long-horizon formulas need theta > 0."""


class NoConvergenceError(NumericalError):
    """An iterative solver (barycenter fixed point, ODE) did not converge."""


class SingularIterateError(NumericalError):
    """A barycenter iterate lost rank and could not be regularized."""


class ReportIOError(HarvestRiskError):
    """A report file could not be written."""

    exit_code = 1
