"""Configuration management for markov-poisson.

A run is described by one JSON or YAML document whose top-level keys are
``model``, ``scheme``, ``g``, ``anchor``, ``probes``, ``grid``, ``output``,
``tolerances`` and ``expect_converged``, plus the optional ``simulation``,
``level`` and ``threads`` keys read by the single-level commands.
"""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from markov_poisson.chain import FamilyParams, ForcingFunction, family_from_dict
from markov_poisson.errors import ConfigError, ErrorCode, FileError, MarkovPoissonError
from markov_poisson.golden import example_closed_forms
from markov_poisson.simulation import DEFAULT_MAX_STEPS, SimConfig
from markov_poisson.solver import CONSISTENCY_TOL, RESIDUAL_TOL, ROUTE_TOL
from markov_poisson.truncation import (
    CENSOR_STABILITY_TOL,
    CLIP_TOL,
    AugmentationScheme,
    Censored,
    LinearColumn,
)


class ForcingKind(str, Enum):
    """Forcing function shapes."""

    IDENTITY = "identity"
    CONSTANT = "constant"
    INDICATOR = "indicator"
    POWER = "power"
    VALUES = "values"
    FAMILY_DEFAULT = "family_default"


class ModelSpec(BaseModel):
    """Model family and its parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: str = Field(default="example53")
    params: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_family(self) -> ModelSpec:
        try:
            self.build()
        except MarkovPoissonError as e:
            raise ValueError(f"{e.message}: {e.details}") from e
        return self

    def build(self) -> FamilyParams:
        """Validated family parameters."""
        return family_from_dict({"family": self.family, "params": self.params})


class ForcingSpec(BaseModel):
    """Forcing function g."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ForcingKind = Field(default=ForcingKind.FAMILY_DEFAULT)
    value: float = Field(default=1.0)
    state: int = Field(default=0, ge=0)
    exponent: float = Field(default=1.0)
    values: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_values(self) -> ForcingSpec:
        if self.kind is ForcingKind.VALUES and not self.values:
            raise ValueError("forcing kind 'values' needs a non-empty 'values' list")
        return self

    def build(self, family: FamilyParams) -> ForcingFunction:
        """Forcing function for ``family``.

        ``family_default`` is the reference forcing of a built-in family with closed
        forms (carrying its known stationary mean), and g(i) = i otherwise.
        """
        if self.kind is ForcingKind.FAMILY_DEFAULT:
            try:
                return example_closed_forms(family).forcing()
            except MarkovPoissonError:
                return ForcingFunction.identity()
        if self.kind is ForcingKind.IDENTITY:
            return ForcingFunction.identity()
        if self.kind is ForcingKind.CONSTANT:
            return ForcingFunction.constant(self.value)
        if self.kind is ForcingKind.INDICATOR:
            return ForcingFunction.indicator(self.state)
        if self.kind is ForcingKind.POWER:
            return ForcingFunction.power(self.exponent)
        return ForcingFunction.from_values(self.values)


class GridSpec(BaseModel):
    """Truncation levels n_min, n_min + step, ..., up to n_max."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_min: int = Field(default=10, ge=0)
    n_max: int = Field(default=26, ge=0)
    step: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _check_order(self) -> GridSpec:
        if self.n_max < self.n_min:
            raise ValueError(f"grid is empty: n_max {self.n_max} < n_min {self.n_min}")
        return self

    def levels(self) -> list[int]:
        return list(range(self.n_min, self.n_max + 1, self.step))


class OutputSpec(BaseModel):
    """Report destinations.

    Wall time is written as 0 unless ``timing`` is set, so that identical configs
    give byte-identical reports.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    csv: Path | None = None
    json_path: Path | None = Field(default=None, alias="json")
    timing: bool = Field(default=False)


class Tolerances(BaseModel):
    """Numerical tolerances passed down to the solvers and the diagnosis."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    residual: float = Field(default=RESIDUAL_TOL, gt=0.0)
    consistency: float = Field(default=CONSISTENCY_TOL, gt=0.0)
    clip: float = Field(default=CLIP_TOL, ge=0.0)
    route: float = Field(default=ROUTE_TOL, gt=0.0)
    censor_stability: float = Field(default=CENSOR_STABILITY_TOL, gt=0.0)
    window: int = Field(default=4, ge=2)
    rtol: float = Field(default=1e-6, gt=0.0)


class SimulationSpec(BaseModel):
    """Monte Carlo settings of the ``simulate`` command."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0)
    replications: int = Field(default=100_000, ge=1)
    start: int | None = Field(default=None, ge=0)
    block_size: int = Field(default=10_000, ge=1)
    max_steps: int = Field(default=DEFAULT_MAX_STEPS, gt=0)

    def to_sim_config(self, anchor: int) -> SimConfig:
        """SimConfig starting at ``start`` (default: the anchor)."""
        return SimConfig(
            seed=self.seed,
            replications=self.replications,
            start=anchor if self.start is None else self.start,
            anchor=anchor,
            max_steps=self.max_steps,
            block_size=self.block_size,
        )


class SweepConfig(BaseModel):
    """Main run configuration."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    model: ModelSpec = Field(default_factory=ModelSpec)
    scheme: AugmentationScheme = Field(default_factory=Censored)
    g: ForcingSpec = Field(default_factory=ForcingSpec)
    anchor: int = Field(default=0, ge=0)
    probes: list[int] = Field(default_factory=lambda: [1])
    grid: GridSpec = Field(default_factory=GridSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    expect_converged: bool = Field(default=False)
    simulation: SimulationSpec = Field(default_factory=SimulationSpec)
    level: int | None = Field(default=None, ge=0)
    threads: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_levels(self) -> SweepConfig:
        if any(p < 0 for p in self.probes):
            raise ValueError("probe states must be non-negative")
        lowest = max([self.anchor, *self.probes])
        if self.grid.n_min < lowest:
            raise ValueError(
                f"grid.n_min {self.grid.n_min} must be >= anchor and every probe ({lowest})"
            )
        if isinstance(self.scheme, LinearColumn) and self.scheme.anchor > self.grid.n_min:
            raise ValueError(
                f"linear augmentation column {self.scheme.anchor} exceeds n_min {self.grid.n_min}"
            )
        if self.g.kind is ForcingKind.VALUES and len(self.g.values) <= max(
            self.grid.n_max, self.level or 0
        ):
            raise ValueError("forcing 'values' must cover every level of the grid")
        return self

    @property
    def run_level(self) -> int:
        """Level used by the single-level commands."""
        return self.grid.n_max if self.level is None else self.level

    def family(self) -> FamilyParams:
        return self.model.build()

    def forcing(self) -> ForcingFunction:
        return self.g.build(self.family())

    @classmethod
    def from_file(cls, path: Path | str) -> SweepConfig:
        """Load configuration from a JSON or YAML file.

        Args:
            path: ``.json`` files are read as JSON, anything else as YAML

        Returns:
            SweepConfig instance

        Raises:
            ConfigError: If the file is missing, malformed or invalid
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(
                f"Configuration file not found: {path}",
                ErrorCode.CONFIG_NOT_FOUND,
                {"path": str(path)},
            )
        try:
            text = path.read_text(encoding="utf-8")
            if path.suffix.lower() == ".json":
                data = json.loads(text)
            else:
                data = yaml.safe_load(text) or {}
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(
                f"Failed to parse config {path}: {e}",
                ErrorCode.CONFIG_PARSE_ERROR,
                {"path": str(path)},
                e,
            )
        if not isinstance(data, dict):
            raise ConfigError(
                f"Config {path} must contain a mapping at the top level",
                ErrorCode.CONFIG_PARSE_ERROR,
                {"path": str(path)},
            )
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(
                f"Invalid configuration in {path}",
                ErrorCode.CONFIG_INVALID,
                {"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
                e,
            )

    def to_file(self, path: Path | str) -> None:
        """Save configuration as JSON (``.json``) or YAML.

        Raises:
            FileError: If file writing fails
        """
        path = Path(path)
        data = self.model_dump(mode="json", by_alias=True, exclude_none=True)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.suffix.lower() == ".json":
                path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
            else:
                with open(path, "w", encoding="utf-8") as f:
                    yaml.safe_dump(data, f, default_flow_style=False, sort_keys=False)
        except OSError as e:
            raise FileError(
                f"Failed to save config to {path}: {e}",
                ErrorCode.FILE_WRITE_ERROR,
                {"path": str(path)},
                e,
            )

    def merge_with_args(self, args: dict[str, Any]) -> SweepConfig:
        """Merge configuration with command-line arguments.

        Args:
            args: Dictionary of command-line arguments; None values are ignored

        Returns:
            New SweepConfig with merged settings
        """
        data = self.model_dump(by_alias=True)

        if args.get("threads"):
            data["threads"] = args["threads"]
        if args.get("level") is not None:
            data["level"] = args["level"]
        if args.get("expect_converged"):
            data["expect_converged"] = True
        if args.get("csv"):
            data["output"]["csv"] = Path(args["csv"])
        if args.get("json"):
            data["output"]["json"] = Path(args["json"])
        if args.get("seed") is not None:
            data["simulation"]["seed"] = args["seed"]
        if args.get("replications"):
            data["simulation"]["replications"] = args["replications"]

        try:
            return SweepConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(
                "Command-line options conflict with the configuration",
                ErrorCode.CONFIG_INVALID,
                {"errors": [err["msg"] for err in e.errors()]},
                e,
            )


def get_default_config_path() -> Path:
    """Get default configuration file path.

    Returns:
        First existing candidate, else ``./markov-poisson.yaml``
    """
    candidates = [
        Path.cwd() / "markov-poisson.yaml",
        Path.cwd() / "markov-poisson.json",
        Path.cwd() / ".markov-poisson.yaml",
    ]

    for path in candidates:
        if path.exists():
            return path

    return candidates[0]


def example_config() -> SweepConfig:
    """Censored sweep of the branching family over levels 10, 12, ..., 26."""
    return SweepConfig(
        model=ModelSpec(family="example53", params={"alpha": 1.0}),
        scheme=Censored(outer="exact"),
        g=ForcingSpec(kind=ForcingKind.FAMILY_DEFAULT),
        anchor=0,
        probes=[1, 2],
        grid=GridSpec(n_min=10, n_max=26, step=2),
        output=OutputSpec(csv=Path("sweep.csv")),
    )
