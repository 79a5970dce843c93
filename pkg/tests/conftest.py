"""
Test configuration and fixtures.
"""

from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pytest
from loguru import logger

from harvestrisk import logging as hr_logging
from harvestrisk.control import ControlSolution, solve
from harvestrisk.types import EconomicParams, RateVariant, SpatialDomain
from harvestrisk.validation import validate_domain, validate_priors

FILES_DIR = Path(__file__).parent / "files"


def random_domain(rng: np.random.Generator, n: int) -> SpatialDomain:
    """Connected random domain: a random spanning tree plus a few extra edges."""
    edges = []
    order = rng.permutation(n)
    for pos in range(1, n):
        parent = order[rng.integers(0, pos)]
        edges.append([int(order[pos]), int(parent), float(rng.uniform(0.2, 1.5))])
    seen = {(min(i, j), max(i, j)) for i, j, _ in edges}
    for _ in range(n // 2):
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (min(i, j), max(i, j)) not in seen:
            seen.add((min(i, j), max(i, j)))
            edges.append([i, j, float(rng.uniform(0.2, 1.5))])
    pi = rng.uniform(0.1, 1.0, size=n)
    return validate_domain(
        {
            "n_regions": n,
            "edges": edges,
            "a_diag": rng.uniform(0.0, 0.05, size=n).tolist(),
            "b_diag": rng.uniform(0.5, 1.5, size=n).tolist(),
            "d_weights": rng.uniform(0.5, 1.5, size=n).tolist(),
            "pi_weights": (pi / pi.sum()).tolist(),
        }
    )


def random_prior_set(rng: np.random.Generator, dimension: int, count: int):
    """Prior set of random SPD Gaussian models with Dirichlet weights."""
    models = []
    for _ in range(count):
        factor = rng.standard_normal((dimension, dimension))
        scatter = factor @ factor.T / dimension + 0.1 * np.eye(dimension)
        models.append(
            {
                "mean": rng.uniform(0.5, 1.5, size=dimension).tolist(),
                "scatter": scatter.tolist(),
                "weight": 1.0,
            }
        )
    for model, w in zip(models, rng.dirichlet(np.ones(count))):
        model["weight"] = float(w)
    return validate_priors(models, dimension)


@pytest.fixture
def files_dir() -> Path:
    """Directory of bundled scenario files."""
    return FILES_DIR


@pytest.fixture
def single_region_path() -> Path:
    return FILES_DIR / "single_region.json"


@pytest.fixture
def two_region_path() -> Path:
    return FILES_DIR / "two_region.json"


@pytest.fixture
def ring_path() -> Path:
    return FILES_DIR / "ring4.yaml"


@pytest.fixture
def single_region_domain() -> SpatialDomain:
    """N=1: a = 0.05, B = D = 1."""
    return validate_domain(
        {
            "n_regions": 1,
            "edges": [],
            "a_diag": [0.05],
            "b_diag": [1.0],
            "d_weights": [1.0],
            "pi_weights": [1.0],
        }
    )


@pytest.fixture
def single_region_params() -> EconomicParams:
    return EconomicParams(r=0.1, beta=0.5, horizon=10.0, kappa0=1.0)


@pytest.fixture
def single_region_solution(single_region_domain, single_region_params) -> ControlSolution:
    """theta = 0.15, Lambda = 1, M = -0.1."""
    return solve(single_region_domain, single_region_params)


@pytest.fixture
def symmetric_pair_domain() -> SpatialDomain:
    """K2 with unit weight, A = 0, B = D = 1."""
    return validate_domain(
        {
            "n_regions": 2,
            "edges": [[0, 1, 1.0]],
            "a_diag": [0.0, 0.0],
            "b_diag": [1.0, 1.0],
            "d_weights": [1.0, 1.0],
            "pi_weights": [0.5, 0.5],
        }
    )


@pytest.fixture
def symmetric_pair_solution(symmetric_pair_domain) -> ControlSolution:
    """theta = 0.2, Lambda = 2 sqrt(2), FOC rates."""
    params = EconomicParams(r=0.1, beta=0.5, horizon=5.0, kappa0=2.0)
    return solve(symmetric_pair_domain, params, RateVariant.FOC)


@pytest.fixture
def asymmetric_pair_domain() -> SpatialDomain:
    return validate_domain(
        {
            "n_regions": 2,
            "edges": [[0, 1, 0.7]],
            "a_diag": [0.01, 0.04],
            "b_diag": [1.0, 1.5],
            "d_weights": [1.0, 2.0],
            "pi_weights": [0.3, 0.7],
        }
    )


@pytest.fixture
def domain_factory() -> Callable[..., SpatialDomain]:
    """Random connected domains from a seeded generator."""
    return random_domain


@pytest.fixture
def priors_factory():
    """Random SPD prior sets from a seeded generator."""
    return random_prior_set


@pytest.fixture
def solution_factory() -> Callable[..., ControlSolution]:
    """Solve a random domain with theta > 0."""

    def make(
        rng: np.random.Generator,
        n: int,
        horizon: float = 10.0,
        variant: RateVariant = RateVariant.PAPER,
        beta: Optional[float] = None,
    ) -> ControlSolution:
        domain = random_domain(rng, n)
        params = EconomicParams(
            r=0.1,
            beta=float(rng.uniform(0.3, 0.7)) if beta is None else beta,
            horizon=horizon,
            kappa0=float(rng.uniform(0.5, 2.0)),
        )
        return solve(domain, params, variant)

    return make


@pytest.fixture(autouse=True)
def reset_logging(monkeypatch):
    """Keep LOG_LEVEL and the configured sink from leaking between tests."""
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.setattr(hr_logging, "_configured_level", None)
    yield
    logger.remove()
