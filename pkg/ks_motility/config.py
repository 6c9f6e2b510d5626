"""Structured run configuration and YAML persistence."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ks_motility.grid import build_grid
from ks_motility.models import InitialDataSpec, MotilityFamily, MotilitySpec

OUTPUT_ROOT_ENV = "KS_MOTILITY_OUTPUT_ROOT"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    """Box domain and cell counts."""

    dim: int = 1
    extents: list[float] = Field(default_factory=lambda: [1.0])
    cells: list[int] = Field(default_factory=lambda: [64])

    @model_validator(mode="after")
    def _check_grid(self) -> "GridConfig":
        build_grid(self.dim, self.extents, self.cells)
        return self


class MotilityConfig(_Section):
    """Motility family and parameters."""

    family: MotilityFamily = MotilityFamily.EXP_DECAY
    parameters: list[float] = Field(default_factory=lambda: [1.0, 0.5])

    @model_validator(mode="after")
    def _check_motility(self) -> "MotilityConfig":
        MotilitySpec(family=self.family, parameters=self.parameters)
        return self


class ProblemConfig(_Section):
    """Declarative form of a ProblemSpec."""

    grid: GridConfig = Field(default_factory=GridConfig)
    motility: MotilityConfig = Field(default_factory=MotilityConfig)
    u0: InitialDataSpec
    v0: InitialDataSpec
    epsilon: float = Field(default=0.0, ge=0)


class TimeConfig(_Section):
    """Time horizon and step control."""

    t_end: float = Field(gt=0)
    dt: Union[Literal["auto"], float] = "auto"
    safety: float = Field(default=0.9, gt=0, le=1)
    solver_tol: float = Field(default=1e-11, gt=0, le=1e-6)
    max_iters: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_dt(self) -> "TimeConfig":
        if self.dt != "auto" and not self.dt > 0:
            raise ValueError(f"dt must be positive or 'auto', got {self.dt}")
        return self


class DiagnosticsSettings(_Section):
    """What to record and how often."""

    cadence: int = Field(default=10, ge=1)
    p_values: list[float] = Field(default_factory=lambda: [2.0, 3.0])
    weighted: bool = False
    weighted_p: float = Field(default=2.0, gt=1)
    u_thresholds: list[float] = Field(default_factory=lambda: [0.1, 0.01])
    v_thresholds: list[float] = Field(default_factory=lambda: [0.5, 0.1, 0.02, 0.001])

    @model_validator(mode="after")
    def _check_p(self) -> "DiagnosticsSettings":
        if any(p < 1 for p in self.p_values):
            raise ValueError("p_values must be >= 1")
        return self


class OutputConfig(_Section):
    """Where and what to write. snapshot_cadence = 0 disables snapshots."""

    directory: Path = Path("runs/default")
    snapshot_cadence: int = Field(default=0, ge=0)
    formats: list[Literal["csv", "snapshots", "plots"]] = Field(
        default_factory=lambda: ["csv", "snapshots"]
    )


class RunConfig(_Section):
    """Complete configuration of one run (or the template of a sweep/study)."""

    name: str = "run"
    problem: ProblemConfig
    time: TimeConfig
    diagnostics: DiagnosticsSettings = Field(default_factory=DiagnosticsSettings)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(default=1, ge=1)


def load_config(config_path: Path) -> RunConfig:
    """Load and validate a YAML run configuration.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the YAML is malformed or fails validation
    """
    if not config_path.exists():
        raise FileNotFoundError(f"Config not found at {config_path}")

    with open(config_path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValueError(f"Malformed YAML in {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"Config {config_path} must be a mapping")
    return RunConfig.model_validate(data)


def config_to_yaml(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def dump_config(config: RunConfig, config_path: Path) -> None:
    """Write a run configuration as YAML."""
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(config_to_yaml(config))


def resolve_output_dir(config: RunConfig) -> Path:
    """Output directory, placed under $KS_MOTILITY_OUTPUT_ROOT when that is set."""
    directory = config.output.directory
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not directory.is_absolute():
        return Path(root) / directory
    return directory
