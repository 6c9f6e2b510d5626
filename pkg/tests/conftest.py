"""Pytest configuration and fixtures."""

from pathlib import Path

import numpy as np
import pytest

from ks_motility.config import RunConfig, load_config
from ks_motility.grid import Field, Grid, build_grid
from ks_motility.problem import ProblemSpec, make_initial_data, make_motility
from ks_motility.scenarios import get_scenario


@pytest.fixture
def fixtures_dir() -> Path:
    """Return the path to the fixtures directory."""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def small_run_path(fixtures_dir: Path) -> Path:
    """Return the path to the small 1D run configuration."""
    return fixtures_dir / "small_run.yaml"


@pytest.fixture
def small_run_config(small_run_path: Path, tmp_path: Path) -> RunConfig:
    """Load the small run configuration with its output redirected to tmp_path."""
    config = load_config(small_run_path)
    return config.model_copy(
        update={"output": config.output.model_copy(update={"directory": tmp_path / "run"})}
    )


@pytest.fixture
def constant_state_config(tmp_path: Path) -> RunConfig:
    """The u0 = 1, v0 = 0 steady state, written under tmp_path."""
    config = get_scenario("constant_state")
    return config.model_copy(
        update={"output": config.output.model_copy(update={"directory": tmp_path / "steady"})}
    )


@pytest.fixture
def grid_1d() -> Grid:
    """Unit interval with 16 cells."""
    return build_grid(1, [1.0], [16])


@pytest.fixture
def grid_2d() -> Grid:
    """Rectangle [0, 1] x [0, 2] with 8 x 12 cells."""
    return build_grid(2, [1.0, 2.0], [8, 12])


@pytest.fixture
def grid_3d() -> Grid:
    """Box [0, 1] x [0, 1] x [0, 2] with 6 x 5 x 8 cells."""
    return build_grid(3, [1.0, 1.0, 2.0], [6, 5, 8])


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def bump_problem(grid_1d: Grid) -> ProblemSpec:
    """Gaussian u0 on a positive background, v0 = 1, exponential motility."""
    u0 = make_initial_data(
        grid_1d, "gaussian", {"width": 0.1, "amplitude": 4.0, "background": 0.2}
    )
    v0 = Field.constant(grid_1d, 1.0)
    return ProblemSpec(
        grid=grid_1d, phi=make_motility("exp_decay", [1.0, 0.5]), u0=u0, v0=v0, epsilon=0.1
    )
