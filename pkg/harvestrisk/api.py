"""
API module: pipeline orchestration for one scenario.

Each subcommand builds a report document (provenance, echoed scenario,
results) that is written as ``<subcommand>.json``; ``simulate`` and
``robust`` also write CSV time series.
"""

from pathlib import Path
from pprint import pformat
from typing import Any, Dict, List, Literal, Optional, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .config import Scenario, parse_scenario
from .control import (
    ControlSolution,
    bracket,
    finite_horizon_trajectory,
    phi_factor,
    psi0,
    simulate,
    solve,
)
from .errors import EXIT_USAGE, HarvestRiskError
from .formats import EmittedFile, emit_report
from .oracles import run_suite
from .risk import (
    allocations,
    aggregation_residual,
    loss_distribution,
    risk_coefficients,
    risk_report,
    robust_policy,
    total_risk,
)
from .spatial import build_laplacian, spectral_solution
from .transport import barycenter_with_diagnostics, frechet_variance
from .types import OracleReport, RateVariant, SpectralSolution

Subcommand = Literal[
    "spectral", "solve", "simulate", "risk", "allocate", "robust", "barycenter", "verify"
]
SUBCOMMANDS = (
    "spectral",
    "solve",
    "simulate",
    "risk",
    "allocate",
    "robust",
    "barycenter",
    "verify",
)


class RunRequest(BaseModel):
    """Request model for one subcommand run."""

    model_config = ConfigDict(extra="forbid", validate_default=True)

    subcommand: Subcommand
    scenario_path: str
    out_dir: str
    variant: Optional[RateVariant] = None
    no_aversion: bool = False
    tolerances: List[str] = Field(default_factory=list)
    finite_horizon: bool = False


class RunResponse(BaseModel):
    """Response model for one subcommand run."""

    model_config = ConfigDict(extra="forbid", validate_default=True)

    success: bool
    exit_code: int = 0
    files: List[str] = Field(default_factory=list)
    error: Optional[str] = None
    failed_reports: List[str] = Field(default_factory=list)


class ScenarioProcessor:
    """Runs the spectral -> control -> risk -> oracle pipeline for a scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._spectral: Optional[SpectralSolution] = None
        self._solution: Optional[ControlSolution] = None
        self.reports: List[OracleReport] = []

    @property
    def spectral(self) -> SpectralSolution:
        if self._spectral is None:
            tol = self.scenario.tolerances
            self._spectral = spectral_solution(
                self.scenario.domain, tol.eigen_gap, tol.positivity
            )
        return self._spectral

    @property
    def solution(self) -> ControlSolution:
        if self._solution is None:
            tol = self.scenario.tolerances
            self._solution = solve(
                self.scenario.domain,
                self.scenario.economics,
                self.scenario.rate_variant,
                tol.eigen_gap,
                tol.positivity,
                tol.theta_floor,
            )
        return self._solution

    def _document(self, subcommand: str, results: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "provenance": {
                "tool": "harvestrisk",
                "version": __version__,
                "schema_version": self.scenario.schema_version,
                "subcommand": subcommand,
                "scenario_sha256": self.scenario.source_hash,
                "seed": self.scenario.seed,
            },
            "scenario": self.scenario.echo(),
            "results": results,
        }

    def spectral_results(self) -> Dict[str, Any]:
        spectral = self.spectral
        return {
            "lambda_min": spectral.lambda_min,
            "alpha": spectral.alpha,
            "spectral_gap": spectral.spectral_gap,
            "laplacian": build_laplacian(self.scenario.domain),
            "drift": spectral.drift,
        }

    def solve_results(self) -> Dict[str, Any]:
        solution = self.solution
        times = self.scenario.times
        params = solution.params
        results: Dict[str, Any] = {
            "lambda_min": solution.spectral.lambda_min,
            "alpha": solution.alpha,
            "theta": solution.theta,
            "lambda_alpha": solution.lambda_alpha,
            "rate_variant": solution.rate_variant.value,
            "closed_loop": solution.closed_loop,
            "times": times,
            "bracket": [bracket(t, solution) for t in times],
        }
        results["psi0"] = [psi0(t, solution.theta, solution.lambda_alpha, params) for t in times]
        if solution.theta > 0:
            results["phi"] = [phi_factor(t, solution) for t in times]
        return results

    def simulate_results(self, finite_horizon: bool = False) -> Dict[str, Any]:
        """States and rates from k_0 = m_B; optionally the exact finite-horizon path."""
        solution = self.solution
        k0 = self.scenario.priors.barycentric_mean()
        times = self.scenario.times
        states, rates = simulate(k0, times, solution)
        results: Dict[str, Any] = {
            "k0": k0,
            "times": times,
            "states": states,
            "rates": rates,
        }
        if finite_horizon:
            fh_states, fh_rates = finite_horizon_trajectory(
                k0, times, solution, self.scenario.rate_variant
            )
            results["finite_horizon"] = {
                "times": times,
                "states": fh_states,
                "rates": fh_rates,
            }
        return results

    def risk_results(self) -> Dict[str, Any]:
        scenario = self.scenario
        tol = scenario.tolerances
        report = risk_report(
            self.solution,
            scenario.priors,
            scenario.preferences,
            scenario.times,
            tol.barycenter_residual,
            tol.barycenter_max_iter,
        )
        coeffs = risk_coefficients(self.solution)
        return {
            "total_risk": report.total_risk,
            "g_total": coeffs.g_total,
            "g_region": coeffs.g_region,
            "tilde_alpha": coeffs.tilde_alpha,
            "frechet_variance": report.frechet_variance,
            "aggregation_residual": report.aggregation_residual,
            "barycenter": report.barycenter,
            "robust_model": report.robust_model,
            "loss_under_barycenter": loss_distribution(report.barycenter, coeffs),
            "loss_under_robust_model": loss_distribution(report.robust_model, coeffs),
            "allocations": report.allocations,
        }

    def allocate_results(self) -> Dict[str, Any]:
        scenario = self.scenario
        coeffs = risk_coefficients(self.solution)
        args = (coeffs, scenario.priors, scenario.preferences)
        return {
            "total_risk": total_risk(*args),
            "allocations": allocations(*args),
            "g_region": coeffs.g_region,
            "pi_weights": scenario.domain.pi_weights,
            "aggregation_residual": aggregation_residual(
                *args, scenario.domain.pi_weights
            ),
        }

    def robust_results(self) -> Dict[str, Any]:
        scenario = self.scenario
        seed = scenario.require_seed()
        tol = scenario.tolerances
        center = barycenter_with_diagnostics(
            scenario.priors, tol.barycenter_residual, tol.barycenter_max_iter
        )[0]
        coeffs = risk_coefficients(self.solution)
        policy = robust_policy(
            coeffs, self.solution, scenario.preferences, scenario.priors, scenario.times, center
        )
        sample_mean, standard_error = policy.summary(scenario.samples, seed)
        return {
            "robust_model": policy.model,
            "barycenter": center,
            "times": policy.times,
            "states": policy.mean_states,
            "rates": policy.mean_path,
            "sampled_mean_rates": sample_mean,
            "sampled_standard_errors": standard_error,
            "samples": scenario.samples,
        }

    def barycenter_results(self) -> Dict[str, Any]:
        tol = self.scenario.tolerances
        center, result = barycenter_with_diagnostics(
            self.scenario.priors, tol.barycenter_residual, tol.barycenter_max_iter
        )
        return {
            "barycenter": center,
            "frechet_variance": frechet_variance(self.scenario.priors, center),
            "iterations": result.iterations,
            "residual": result.residual,
            "regularized": result.regularized,
        }

    def verify_reports(self) -> List[OracleReport]:
        scenario = self.scenario
        seed = scenario.require_seed()
        self.reports = run_suite(
            self.solution, scenario.priors, scenario.preferences, seed, scenario.tolerances
        )
        for report in self.reports:
            if not report.asserted:
                logger.warning(f"{report.name}: diagnostic only (inconsistent regime)")
        return self.reports

    def emit(
        self, subcommand: str, out_dir: Union[str, Path], finite_horizon: bool = False
    ) -> List[EmittedFile]:
        """Run one subcommand and write its reports."""
        logger.info(f"Running {subcommand}")
        if subcommand == "verify":
            reports = [report.model_dump() for report in self.verify_reports()]
            return [emit_report(reports, "json", out_dir, "verify")]

        if subcommand == "simulate":
            results = self.simulate_results(finite_horizon)
        else:
            results = getattr(self, f"{subcommand}_results")()
        files = [emit_report(self._document(subcommand, results), "json", out_dir, subcommand)]
        if subcommand == "simulate":
            files.append(emit_report(results, "csv", out_dir, "simulate"))
            if finite_horizon:
                files.append(
                    emit_report(
                        results["finite_horizon"], "csv", out_dir, "simulate_finite_horizon"
                    )
                )
        elif subcommand == "robust":
            files.append(emit_report(results, "csv", out_dir, "robust_policy"))
        return files


def process(request: RunRequest) -> RunResponse:
    """
    Load the scenario, apply overrides and run one subcommand.

    Args:
        request: RunRequest naming the subcommand, scenario and output directory

    Returns:
        RunResponse; ``exit_code`` is 0 on success, 1 on numerical failure
        or failed oracle reports, 2 on invalid input.
    """
    try:
        scenario = parse_scenario(request.scenario_path).with_overrides(
            variant=request.variant,
            no_aversion=request.no_aversion,
            tolerances=request.tolerances,
        )
        logger.debug("Run request:\n{}", pformat(request.model_dump()))
        processor = ScenarioProcessor(scenario)
        files = processor.emit(request.subcommand, request.out_dir, request.finite_horizon)
        failed = [r.name for r in processor.reports if r.asserted and not r.passed]
        if failed:
            logger.error(f"Oracle reports failed: {', '.join(failed)}")
            return RunResponse(
                success=False,
                exit_code=1,
                files=[str(f.path) for f in files],
                failed_reports=failed,
                error=f"failed oracle reports: {', '.join(failed)}",
            )
        return RunResponse(success=True, files=[str(f.path) for f in files])
    except HarvestRiskError as e:
        logger.debug(f"{type(e).__name__}: {e} details={e.details}")
        return RunResponse(success=False, exit_code=e.exit_code, error=str(e))


def run(
    subcommand: str,
    scenario: Union[str, Path],
    out_dir: Union[str, Path],
    **options: Any,
) -> int:
    """Run one subcommand on a scenario file and return the process exit code.

    An unknown subcommand or option returns 64, like the command line.
    """
    try:
        request = RunRequest(
            subcommand=subcommand, scenario_path=str(scenario), out_dir=str(out_dir), **options
        )
    except ValidationError as e:
        logger.error(f"Invalid run request: {e.errors()[0]['msg']}")
        return EXIT_USAGE
    return process(request).exit_code
