"""
Scenario configuration for harvestrisk.

This module handles:
1. Reading scenario files (JSON, or YAML by extension)
2. Validating each section through the module gatekeepers
3. Numerical tolerances and their command-line overrides
4. Echoing the effective scenario back for reports
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import HarvestRiskError, InvalidParameterError, ScenarioIOError, SchemaError
from .types import (
    EconomicParams,
    PriorSet,
    RateVariant,
    RiskPreferences,
    SpatialDomain,
    Vector,
)
from .validation import validate_domain, validate_priors

SCHEMA_VERSION = "1"
DEFAULT_TIME_POINTS = 101
DEFAULT_SAMPLES = 10000
YAML_SUFFIXES = {".yaml", ".yml"}


class Tolerances(BaseModel):
    """Numerical tolerances; every field can be overridden per scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    eigen_gap: float = Field(default=1e-10, gt=0)
    positivity: float = Field(default=1e-12, ge=0)
    theta_floor: float = Field(default=1e-12, ge=0)
    psd_clip: float = Field(default=1e-12, ge=0)
    barycenter_residual: float = Field(default=1e-10, gt=0)
    barycenter_max_iter: int = Field(default=500, ge=1)
    trajectory: float = Field(default=1e-6, gt=0)
    rk4_dt: float = Field(default=1e-3, gt=0)
    quadrature: float = Field(default=1e-6, gt=0)
    quadrature_dt_fraction: float = Field(default=1e-3, gt=0, le=0.5)
    hjb: float = Field(default=1e-6, gt=0)
    fd_step_fraction: float = Field(default=1e-5, gt=0, lt=0.1)
    foc: float = Field(default=1e-10, gt=0)
    sup: float = Field(default=1e-8, gt=0)
    aggregation: float = Field(default=1e-10, gt=0)
    euler: float = Field(default=1e-7, gt=0)
    mc_sigmas: float = Field(default=3.0, gt=0)
    mc_samples: int = Field(default=100000, ge=2)

    def with_overrides(self, overrides: Sequence[str]) -> "Tolerances":
        """Apply ``key=value`` overrides, e.g. from repeated ``--tolerance``."""
        updates: Dict[str, Any] = {}
        for item in overrides:
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or not key:
                raise SchemaError(f"expected key=value, got {item!r}", field="tolerances")
            if key not in Tolerances.model_fields:
                raise SchemaError("unknown tolerance", field=f"tolerances.{key}")
            updates[key] = value.strip()
        if not updates:
            return self
        try:
            return Tolerances(**{**self.model_dump(), **updates})
        except ValidationError as e:
            raise _from_validation_error(e, "tolerances") from e


class TimeGridSection(BaseModel):
    """Either a point count on [0, T] or an explicit grid."""

    model_config = ConfigDict(extra="forbid")

    points: Optional[int] = Field(default=None, ge=2)
    times: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_of(self) -> "TimeGridSection":
        if self.points is not None and self.times is not None:
            raise ValueError("give either points or times, not both")
        return self


class EconomicsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: float
    beta: float
    horizon: float
    kappa0: Optional[float] = None
    rate_variant: RateVariant = RateVariant.PAPER


class PreferencesSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = 1.0
    no_aversion: bool = False
    seed: Optional[int] = Field(default=None, ge=0)
    time_grid: TimeGridSection = Field(default_factory=TimeGridSection)
    samples: int = Field(default=DEFAULT_SAMPLES, ge=1)


class Scenario(BaseModel):
    """A fully validated scenario."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    schema_version: str = SCHEMA_VERSION
    domain: SpatialDomain
    economics: EconomicParams
    rate_variant: RateVariant = RateVariant.PAPER
    priors: PriorSet
    preferences: RiskPreferences
    seed: Optional[int] = None
    times: Vector
    samples: int = DEFAULT_SAMPLES
    tolerances: Tolerances = Field(default_factory=Tolerances)
    source_hash: Optional[str] = None

    def require_seed(self) -> int:
        """Seed for sampling subcommands; sampling without one is refused."""
        if self.seed is None:
            raise SchemaError(
                "a seed is required for sampling subcommands", field="preferences.seed"
            )
        return self.seed

    def with_overrides(
        self,
        variant: Optional[Union[str, RateVariant]] = None,
        no_aversion: bool = False,
        tolerances: Sequence[str] = (),
    ) -> "Scenario":
        """Copy of the scenario with command-line overrides applied."""
        updates: Dict[str, Any] = {}
        if variant is not None:
            updates["rate_variant"] = RateVariant(variant)
        if no_aversion:
            updates["preferences"] = self.preferences.model_copy(update={"no_aversion": True})
        if tolerances:
            updates["tolerances"] = self.tolerances.with_overrides(tolerances)
        return self.model_copy(update=updates) if updates else self

    def echo(self) -> Dict[str, Any]:
        """The effective scenario in file schema form."""
        domain = self.domain.model_dump()
        domain["edges"] = [list(edge) for edge in self.domain.edges]
        return {
            "schema_version": self.schema_version,
            "domain": domain,
            "economics": {
                **self.economics.model_dump(),
                "rate_variant": self.rate_variant.value,
            },
            "priors": {
                "models": [
                    {**model.model_dump(), "weight": float(w)}
                    for model, w in zip(self.priors.models, self.priors.weights)
                ]
            },
            "preferences": {
                **self.preferences.model_dump(),
                "seed": self.seed,
                "time_grid": {"times": self.times.tolist()},
                "samples": self.samples,
            },
            "tolerances": self.tolerances.model_dump(),
        }


def _from_validation_error(error: ValidationError, prefix: str) -> HarvestRiskError:
    """Map the first pydantic error onto a field-qualified library error."""
    first = error.errors()[0]
    path = ".".join(str(part) for part in (prefix, *first["loc"]) if part != "")
    kind = first["type"]
    if kind in {"missing", "extra_forbidden"} or kind.endswith(("_type", "_parsing")):
        return SchemaError(first["msg"], field=path)
    return InvalidParameterError(first["msg"], field=path)


def _section(data: Mapping[str, Any], key: str, required: bool = True) -> Any:
    if key not in data:
        if required:
            raise SchemaError("field required", field=key)
        return None
    return data[key]


def _time_grid(section: TimeGridSection, horizon: float) -> np.ndarray:
    if section.times is None:
        return np.linspace(0.0, horizon, section.points or DEFAULT_TIME_POINTS)
    times = np.asarray(section.times, dtype=float)
    field = "preferences.time_grid.times"
    if times.size == 0:
        raise SchemaError("time grid is empty", field=field)
    if not np.all(np.isfinite(times)) or np.any(np.diff(times) < 0):
        raise InvalidParameterError("times must be finite and sorted", field=field)
    if times[0] < 0 or times[-1] > horizon:
        raise InvalidParameterError(f"times must lie in [0, {horizon}]", field=field)
    return times


def parse_scenario_data(
    data: Any, source_hash: Optional[str] = None
) -> Scenario:
    """
    Validate a decoded scenario document.

    Args:
        data: Mapping decoded from JSON or YAML.
        source_hash: SHA-256 of the file the mapping was read from.

    Returns:
        Validated Scenario.

    Raises:
        SchemaError: Missing, unknown or malformed fields.
        InvalidInputError: A section failed its module validator.
    """
    if not isinstance(data, Mapping):
        raise SchemaError("scenario must be a mapping")
    allowed = {"schema_version", "domain", "economics", "priors", "preferences", "tolerances"}
    unknown = set(data) - allowed
    if unknown:
        raise SchemaError("unknown field", field=sorted(unknown)[0])

    version = str(_section(data, "schema_version"))
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {version!r}", field="schema_version")

    try:
        tolerances = Tolerances(**(_section(data, "tolerances", required=False) or {}))
    except ValidationError as e:
        raise _from_validation_error(e, "tolerances") from e
    except TypeError as e:
        raise SchemaError("expected a mapping", field="tolerances") from e

    try:
        domain = validate_domain(_section(data, "domain"))
    except HarvestRiskError as e:
        raise e.with_prefix("domain")

    try:
        priors = validate_priors(
            _section(data, "priors"), domain.n_regions, tolerances.psd_clip
        )
    except HarvestRiskError as e:
        raise e.with_prefix("priors")

    try:
        economics = EconomicsSection.model_validate(_section(data, "economics"))
    except ValidationError as e:
        raise _from_validation_error(e, "economics") from e
    try:
        prefs = PreferencesSection.model_validate(
            _section(data, "preferences", required=False) or {}
        )
    except ValidationError as e:
        raise _from_validation_error(e, "preferences") from e

    kappa0 = economics.kappa0
    if kappa0 is None:
        kappa0 = float(domain.d_weights @ priors.barycentric_mean())
        logger.debug(f"kappa0 defaults to <D, m_B> = {kappa0:.12g}")
    try:
        params = EconomicParams(
            r=economics.r, beta=economics.beta, horizon=economics.horizon, kappa0=kappa0
        )
    except ValidationError as e:
        raise _from_validation_error(e, "economics") from e
    try:
        preferences = RiskPreferences(gamma=prefs.gamma, no_aversion=prefs.no_aversion)
    except ValidationError as e:
        raise _from_validation_error(e, "preferences") from e

    return Scenario(
        schema_version=version,
        domain=domain,
        economics=params,
        rate_variant=economics.rate_variant,
        priors=priors,
        preferences=preferences,
        seed=prefs.seed,
        times=_time_grid(prefs.time_grid, params.horizon),
        samples=prefs.samples,
        tolerances=tolerances,
        source_hash=source_hash,
    )


def parse_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read and validate a scenario file.

    Files ending in ``.yaml``/``.yml`` are read as YAML, everything else as JSON.

    Raises:
        ScenarioIOError: The file is missing, unreadable or not valid UTF-8 JSON/YAML.
        SchemaError: See ``parse_scenario_data``.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
        text = raw.decode("utf-8")
    except OSError as e:
        raise ScenarioIOError(f"cannot read scenario: {e}", field=str(path)) from e
    except UnicodeDecodeError as e:
        raise ScenarioIOError("scenario is not valid UTF-8", field=str(path)) from e

    try:
        if path.suffix.lower() in YAML_SUFFIXES:
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ScenarioIOError(f"cannot decode scenario: {e}", field=str(path)) from e

    digest = hashlib.sha256(raw).hexdigest()
    logger.info(f"Loaded scenario {path} (sha256 {digest[:12]})")
    return parse_scenario_data(data, source_hash=digest)
