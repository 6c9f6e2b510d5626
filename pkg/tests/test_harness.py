"""Tests for single runs, epsilon sweeps and long-time studies."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from ks_motility import harness
from ks_motility.checks import CheckConfig
from ks_motility.config import RunConfig
from ks_motility.grid import Field, Grid
from ks_motility.harness import (
    ExitCode,
    resolve_step_params,
    run_epsilon_sweep,
    run_longtime_study,
    run_single,
    trajectory_distance,
)
from ks_motility.problem import build_problem
from ks_motility.results import (
    list_snapshots,
    load_manifest,
    read_diagnostics_csv,
    snapshot_path,
    write_snapshot,
)
from ks_motility.scenarios import get_scenario
from ks_motility.stepper import SimState


def _with(config: RunConfig, **sections: dict) -> RunConfig:
    """Copy of a config with some section fields replaced."""
    data = config.model_dump()
    for section, updates in sections.items():
        if isinstance(updates, dict):
            data[section].update(updates)
        else:
            data[section] = updates
    return RunConfig.model_validate(data)


def test_run_single_writes_artifacts(small_run_config: RunConfig) -> None:
    """Test exit 0, row count, snapshots, report and manifest of a clean run."""
    result = run_single(small_run_config)

    directory = Path(result.directory)
    assert result.exit_code == ExitCode.OK
    assert result.steps == 20
    assert len(result.records) == 20 // 2 + 1
    assert result.snapshots == 5
    assert len(list_snapshots(directory)) == 5
    assert (directory / "diagnostics.csv").exists()
    assert (directory / "report.md").exists()
    assert not (directory / "plots").exists()

    manifest = load_manifest(directory)
    assert manifest.status == "passed"
    assert manifest.exit_code == 0
    assert manifest.diagnostics_rows == 11
    assert manifest.final_record == result.final_record
    assert all(f.passed for f in manifest.findings)
    assert manifest.config["name"] == small_run_config.name


def test_run_single_conserves_mass(small_run_config: RunConfig) -> None:
    """Test that the mass column is constant to 1e-10 relative."""
    result = run_single(small_run_config)

    mass = read_diagnostics_csv(Path(result.directory) / "diagnostics.csv")["mass_u"]
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * mass[0]


def test_run_single_steady_state(constant_state_config: RunConfig) -> None:
    """Test that u0 = 1, v0 = 0 gives identically zero distances and plots."""
    result = run_single(constant_state_config)

    columns = read_diagnostics_csv(Path(result.directory) / "diagnostics.csv")
    assert result.exit_code == ExitCode.OK
    assert np.all(columns["stab_u"] == 0.0)
    assert np.all(columns["stab_v"] == 0.0)
    assert len(columns["t"]) == 101
    assert (Path(result.directory) / "plots" / "mass_u.svg").exists()


def test_run_single_manifest_is_written_last(small_run_config: RunConfig) -> None:
    """Test that no artifact is newer than the manifest."""
    result = run_single(small_run_config)

    directory = Path(result.directory)
    manifest_time = (directory / "manifest.json").stat().st_mtime_ns
    others = [p for p in directory.rglob("*") if p.is_file() and p.name != "manifest.json"]
    assert others
    assert all(p.stat().st_mtime_ns <= manifest_time for p in others)


def test_run_single_config_error(small_run_config: RunConfig) -> None:
    """Test that negative initial data exits with code 2 and still writes a manifest."""
    config = _with(
        small_run_config,
        problem={"u0": {"kind": "constant", "value": -1.0}},
    )

    result = run_single(config)

    assert result.exit_code == ExitCode.CONFIG
    assert "negative" in result.error
    manifest = load_manifest(Path(result.directory))
    assert manifest.status == "config_error"
    assert manifest.exit_code == 2


def test_run_single_solver_error(small_run_config: RunConfig) -> None:
    """Test that an iteration cap that cannot be met exits with code 3."""
    config = _with(small_run_config, time={"max_iters": 1, "solver_tol": 1e-12})

    result = run_single(config)

    assert result.exit_code == ExitCode.SOLVER
    assert result.steps is None
    assert len(result.records) == 1
    assert load_manifest(Path(result.directory)).status == "solver_error"


def test_run_single_invariant_violation(
    small_run_config: RunConfig, monkeypatch: pytest.MonkeyPatch
) -> None:
    """Test that a failed check exits with code 4 and artifacts are still written."""
    monkeypatch.setattr(harness, "CheckConfig", lambda **_: CheckConfig(mass_rel_tol=-1.0))

    result = run_single(small_run_config)

    directory = Path(result.directory)
    assert result.exit_code == ExitCode.INVARIANT
    assert (directory / "diagnostics.csv").exists()
    manifest = load_manifest(directory)
    assert manifest.status == "invariant_violation"
    assert not next(f for f in manifest.findings if f.id == "MASS_CONSERVATION").passed


def test_run_single_mass_tolerance_follows_solver_tol(small_run_config: RunConfig) -> None:
    """Test that the mass check allows ten times the configured solver tolerance."""
    config = _with(small_run_config, time={"solver_tol": 1e-8})

    result = run_single(config)

    mass = next(f for f in result.findings if f.id == "MASS_CONSERVATION")
    assert mass.metadata["tolerance"] == pytest.approx(1e-7)


def test_resolve_step_params_auto(small_run_config: RunConfig) -> None:
    """Test that dt = auto is resolved from the certified motility bounds."""
    config = _with(small_run_config, time={"dt": "auto", "safety": 0.5})
    problem = build_problem(config.problem)

    params = resolve_step_params(config, problem)

    # h = 1/16 and phi <= 1.5 on [0, 1], inflated by the certification margin
    assert 0 < params.dt < 0.5 * (1 / 16) ** 2 / (2 * 1.5)
    assert params.solver_tol == config.time.solver_tol


def test_sweep_identical_epsilons(small_run_config: RunConfig) -> None:
    """Test that equal epsilons give distance exactly 0."""
    report = run_epsilon_sweep(small_run_config, [0.5, 0.5])

    assert report.distances == [0.0]
    assert report.passed
    assert report.exit_code == ExitCode.OK
    base = Path(small_run_config.output.directory)
    assert (base / "sweep_report.json").exists()
    assert (base / "sweep_report.md").exists()


def test_sweep_distances_decrease(small_run_config: RunConfig) -> None:
    """Test that neighbouring trajectories get closer as epsilon goes to 0."""
    report = run_epsilon_sweep(small_run_config, [1.0, 0.25, 0.0625, 0.0])

    assert report.member_exit_codes == [0, 0, 0, 0]
    assert len(report.distances) == 3
    assert all(d > 0 for d in report.distances)
    assert report.distances[-1] <= report.distances[0]
    assert report.passed
    saved = json.loads((Path(small_run_config.output.directory) / "sweep_report.json").read_text())
    assert saved["report"]["distances"] == report.distances


def test_sweep_members_share_dt_and_snapshots(small_run_config: RunConfig) -> None:
    """Test member layout: one directory per epsilon with the same snapshot schedule."""
    report = run_epsilon_sweep(small_run_config, [0.2, 0.0])

    first, second = (Path(d) for d in report.member_dirs)
    assert first.name == "eps_00_0.2"
    assert second.name == "eps_01_0"
    assert [p.name for p in list_snapshots(first)] == [p.name for p in list_snapshots(second)]
    assert load_manifest(first).dt == load_manifest(second).dt


def test_sweep_parallel_matches_serial(small_run_config: RunConfig, tmp_path: Path) -> None:
    """Test that worker processes give the same distances."""
    parallel_config = _with(small_run_config, output={"directory": tmp_path / "parallel"})

    serial = run_epsilon_sweep(small_run_config, [0.5, 0.1, 0.0])
    parallel = run_epsilon_sweep(parallel_config, [0.5, 0.1, 0.0], workers=2)

    assert parallel.distances == serial.distances


@pytest.mark.parametrize(
    "eps_list",
    [[0.5], [0.1, 0.5], [0.5, -0.1], [math.inf, 0.0]],
)
def test_sweep_rejects_invalid_epsilons(small_run_config: RunConfig, eps_list: list) -> None:
    """Test that short, increasing, negative or infinite lists are rejected."""
    with pytest.raises(ValueError):
        run_epsilon_sweep(small_run_config, eps_list)


def test_sweep_propagates_member_failure(small_run_config: RunConfig) -> None:
    """Test that a failing member sets the sweep's exit code and skips distances."""
    config = _with(small_run_config, time={"max_iters": 1, "solver_tol": 1e-12})

    report = run_epsilon_sweep(config, [0.5, 0.0])

    assert report.exit_code == ExitCode.SOLVER
    assert report.distances == []
    assert not report.passed


def test_trajectory_distance_requires_matching_schedules(
    tmp_path: Path, grid_1d: Grid, rng: np.random.Generator
) -> None:
    """Test that runs with different snapshot steps cannot be compared."""
    state = SimState(Field(grid_1d, rng.random(16)), Field(grid_1d, rng.random(16)))
    write_snapshot(state, snapshot_path(tmp_path / "a", 0))
    write_snapshot(state, snapshot_path(tmp_path / "b", 5))

    with pytest.raises(ValueError, match="schedules differ"):
        trajectory_distance(tmp_path / "a", tmp_path / "b")


def test_longtime_without_signal(constant_state_config: RunConfig) -> None:
    """Test that v0 = 0 reaches every threshold at t = 0."""
    report = run_longtime_study(constant_state_config, [0.5, 0.1])

    assert report.exit_code == ExitCode.OK
    assert [d.time for d in report.stabilization.v_decay] == [0.0, 0.0]
    assert [d.time for d in report.stabilization.u_decay] == [0.0, 0.0]
    assert (Path(report.directory) / "longtime_report.md").exists()


def test_longtime_uniform_decay(tmp_path: Path) -> None:
    """Test that sup v = (1 + dt)^-n first stays below 0.1 near t = ln 10."""
    config = get_scenario("uniform_decay")
    config = _with(config, output={"directory": tmp_path / "decay", "formats": ["csv"]})

    report = run_longtime_study(config, [0.5, 0.1, 1e-9], u_eta_list=[0.01])

    times = [d.time for d in report.stabilization.v_decay]
    assert times[0] == pytest.approx(math.log(2.0), abs=0.02)
    assert times[1] == pytest.approx(2.30, abs=0.05)
    assert times[2] is None
    assert report.stabilization.u_decay[0].time == 0.0

    saved = json.loads((tmp_path / "decay" / "longtime_report.json").read_text())
    assert "stab_v" not in saved["report"]["stabilization"]


def test_longtime_rejects_nonpositive_eta(constant_state_config: RunConfig) -> None:
    """Test that thresholds must be positive."""
    with pytest.raises(ValueError):
        run_longtime_study(constant_state_config, [0.1, 0.0])


def test_longtime_defaults_to_configured_thresholds(constant_state_config: RunConfig) -> None:
    """Test that without explicit thresholds the diagnostics settings are used."""
    config = _with(constant_state_config, diagnostics={"v_thresholds": [0.3, 0.03]})

    report = run_longtime_study(config)

    assert [d.threshold for d in report.stabilization.v_decay] == [0.3, 0.03]
    assert [d.threshold for d in report.stabilization.u_decay] == [0.1, 0.01]
