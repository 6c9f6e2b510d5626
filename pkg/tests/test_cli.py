"""Tests for CLI."""

import csv
import json
from pathlib import Path

import pytest
import yaml
from typer.testing import CliRunner

from ks_motility.cli import _typer_app
from ks_motility.config import RunConfig, dump_config, load_config

runner = CliRunner()


@pytest.fixture
def config_path(small_run_config: RunConfig, tmp_path: Path) -> Path:
    """The small run configuration written to disk, output under tmp_path."""
    path = tmp_path / "small.yaml"
    dump_config(small_run_config, path)
    return path


def test_cli_run(config_path: Path, small_run_config: RunConfig) -> None:
    """Test a clean run end to end."""
    result = runner.invoke(_typer_app, ["run", str(config_path)])

    assert result.exit_code == 0
    assert "Run complete" in result.stdout
    assert (Path(small_run_config.output.directory) / "manifest.json").exists()


def test_cli_run_invalid_dt(config_path: Path) -> None:
    """Test that dt = -1 exits with code 2."""
    data = yaml.safe_load(config_path.read_text())
    data["time"]["dt"] = -1
    config_path.write_text(yaml.safe_dump(data))

    result = runner.invoke(_typer_app, ["run", str(config_path)])

    assert result.exit_code == 2
    assert "Invalid configuration" in result.stdout


def test_cli_run_missing_config(tmp_path: Path) -> None:
    """Test that a missing configuration exits with code 2."""
    result = runner.invoke(_typer_app, ["run", str(tmp_path / "absent.yaml")])

    assert result.exit_code == 2
    assert "not found" in result.stdout


def test_cli_run_solver_failure(config_path: Path) -> None:
    """Test that a solver failure exits with code 3."""
    data = yaml.safe_load(config_path.read_text())
    data["time"]["max_iters"] = 1
    data["time"]["solver_tol"] = 1e-12
    config_path.write_text(yaml.safe_dump(data))

    result = runner.invoke(_typer_app, ["run", str(config_path)])

    assert result.exit_code == 3


def test_cli_scenario(tmp_path: Path) -> None:
    """Test writing a built-in scenario as YAML."""
    output = tmp_path / "canonical.yaml"

    result = runner.invoke(_typer_app, ["scenario", "canonical_2d", str(output)])

    assert result.exit_code == 0
    config = load_config(output)
    assert config.problem.grid.cells == [64, 64]
    assert config.time.t_end == 20.0


def test_cli_unknown_scenario(tmp_path: Path) -> None:
    """Test that an unknown scenario exits with code 2."""
    result = runner.invoke(_typer_app, ["scenario", "nope", str(tmp_path / "x.yaml")])

    assert result.exit_code == 2
    assert "unknown scenario" in result.stdout


def test_cli_sweep(config_path: Path, small_run_config: RunConfig) -> None:
    """Test an epsilon sweep from the command line."""
    result = runner.invoke(_typer_app, ["sweep", str(config_path), "--eps", "0.5,0.1,0"])

    assert result.exit_code == 0
    assert "Sweep complete" in result.stdout
    assert (Path(small_run_config.output.directory) / "sweep_report.md").exists()


@pytest.mark.parametrize("eps", ["0.1,0.5", "0.5", "a,b"])
def test_cli_sweep_invalid_eps(config_path: Path, eps: str) -> None:
    """Test that malformed or increasing epsilon lists exit with code 2."""
    result = runner.invoke(_typer_app, ["sweep", str(config_path), "--eps", eps])

    assert result.exit_code == 2


def test_cli_longtime(config_path: Path, small_run_config: RunConfig) -> None:
    """Test a long-time study from the command line."""
    result = runner.invoke(
        _typer_app, ["longtime", str(config_path), "--eta", "2,0.5", "--u-eta", "1"]
    )

    assert result.exit_code == 0
    assert "Decay times" in result.stdout
    assert (Path(small_run_config.output.directory) / "longtime_report.json").exists()


def test_cli_longtime_default_thresholds(config_path: Path, small_run_config: RunConfig) -> None:
    """Test that --eta is optional and falls back to the configured thresholds."""
    result = runner.invoke(_typer_app, ["longtime", str(config_path)])

    assert result.exit_code == 0
    path = Path(small_run_config.output.directory) / "longtime_report.json"
    saved = json.loads(path.read_text())
    v_decay = saved["report"]["stabilization"]["v_decay"]
    assert [d["threshold"] for d in v_decay] == small_run_config.diagnostics.v_thresholds


def test_cli_plots(config_path: Path, small_run_config: RunConfig) -> None:
    """Test rendering plots of a finished run."""
    runner.invoke(_typer_app, ["run", str(config_path)])

    result = runner.invoke(_typer_app, ["plots", str(small_run_config.output.directory)])

    assert result.exit_code == 0
    assert (Path(small_run_config.output.directory) / "plots" / "mass_u.svg").exists()


def test_cli_plots_without_run(tmp_path: Path) -> None:
    """Test that plotting an empty directory exits with code 2."""
    result = runner.invoke(_typer_app, ["plots", str(tmp_path)])

    assert result.exit_code == 2


def test_cli_odebounds_verify(tmp_path: Path) -> None:
    """Test the ODE suite on a few seeds with a CSV table."""
    output = tmp_path / "ode.csv"

    result = runner.invoke(
        _typer_app,
        ["odebounds", "verify", "--seed-range", "0..2", "--output", str(output)],
    )

    assert result.exit_code == 0
    assert "All bounds hold" in result.stdout
    with open(output, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 9
    assert all(row["passed"] == "True" for row in rows)


def test_cli_odebounds_single_kind() -> None:
    """Test restricting the suite to one bound."""
    result = runner.invoke(
        _typer_app,
        ["odebounds", "verify", "--seed-range", "3..4", "--kind", "linear_damping"],
    )

    assert result.exit_code == 0
    assert "linear_damping" in result.stdout
    assert "superlinear_absorption" not in result.stdout


@pytest.mark.parametrize(
    "args",
    [["--seed-range", "5..1"], ["--seed-range", "0..1", "--n-steps", "10"]],
)
def test_cli_odebounds_invalid_arguments(args: list[str]) -> None:
    """Test that empty ranges and too few steps exit with code 2."""
    result = runner.invoke(_typer_app, ["odebounds", "verify", *args])

    assert result.exit_code == 2
