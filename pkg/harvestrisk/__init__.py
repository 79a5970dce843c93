"""
harvestrisk: closed-form harvesting policies on spatial networks and the
Wasserstein-barycentric risk of their loss under prior uncertainty.
"""

__version__ = "0.1.0"

from .config import Scenario, Tolerances, parse_scenario
from .control import ControlSolution, solve
from .errors import HarvestRiskError, InvalidInputError, NumericalError
from .risk import risk_report
from .spatial import spectral_solution

__all__ = [
    "ControlSolution",
    "HarvestRiskError",
    "InvalidInputError",
    "NumericalError",
    "Scenario",
    "Tolerances",
    "parse_scenario",
    "risk_report",
    "solve",
    "spectral_solution",
]
