"""
Basic usage examples for harvestrisk.
"""

import numpy as np

from harvestrisk import parse_scenario, risk_report, solve
from harvestrisk.control import finite_horizon_trajectory, simulate
from harvestrisk.oracles import run_suite


def single_region_risk():
    """Total risk and robust initial state for the single-region scenario."""
    scenario = parse_scenario("tests/files/single_region.json")
    solution = solve(scenario.domain, scenario.economics, scenario.rate_variant)
    report = risk_report(solution, scenario.priors, scenario.preferences, scenario.times)
    print(f"theta={solution.theta:.4f} Lambda={solution.lambda_alpha:.4f}")
    print(f"total risk: {report.total_risk:.6f}")
    print(f"robust mean: {report.robust_model.mean}")


def compare_trajectories():
    """Long-horizon path against the exact finite-horizon path."""
    scenario = parse_scenario("tests/files/two_region.json")
    solution = solve(scenario.domain, scenario.economics, scenario.rate_variant)
    k0 = scenario.priors.barycentric_mean()
    states, _ = simulate(k0, scenario.times, solution)
    exact, _ = finite_horizon_trajectory(k0, scenario.times, solution)
    print(f"largest gap: {np.max(np.abs(states - exact)):.3e}")


def verify():
    """Run the oracle suite and list the reports."""
    scenario = parse_scenario("tests/files/ring4.yaml")
    solution = solve(scenario.domain, scenario.economics, scenario.rate_variant)
    for report in run_suite(
        solution, scenario.priors, scenario.preferences, scenario.require_seed()
    ):
        print(f"{report.name:32s} passed={report.passed} {report.diagnostics['regime']}")


if __name__ == "__main__":
    single_region_risk()
    compare_trajectories()
    verify()
