"""Tests for SVG plot emission."""

from pathlib import Path

import pytest

from ks_motility.config import RunConfig
from ks_motility.harness import run_single
from ks_motility.plots import emit_plots


@pytest.fixture
def run_dir(small_run_config: RunConfig) -> Path:
    """A finished small run with CSV and snapshots."""
    return Path(run_single(small_run_config).directory)


def test_emit_plots_writes_svgs(run_dir: Path) -> None:
    """Test that series, window and snapshot plots are written."""
    written = emit_plots(run_dir)

    names = sorted(p.name for p in written)
    assert names == [
        "entropy_u.svg",
        "mass_u.svg",
        "snapshot_0.svg",
        "snapshot_2.svg",
        "snapshot_4.svg",
        "stab_u.svg",
        "sup_v.svg",
        "windows.svg",
    ]
    for path in written:
        assert path.parent == run_dir / "plots"
        assert path.stat().st_size > 0
        assert path.read_text().lstrip().startswith("<?xml")


def test_emit_plots_is_deterministic(run_dir: Path) -> None:
    """Test that rendering twice gives byte-identical files."""
    first = {p.name: p.read_bytes() for p in emit_plots(run_dir)}
    second = {p.name: p.read_bytes() for p in emit_plots(run_dir)}

    assert first == second


def test_emit_plots_2d(small_run_config: RunConfig) -> None:
    """Test snapshot images on a 2D grid."""
    data = small_run_config.model_dump()
    data["problem"]["grid"] = {"dim": 2, "extents": [1.0, 1.0], "cells": [8, 8]}
    data["problem"]["u0"]["center"] = None
    result = run_single(RunConfig.model_validate(data))

    written = emit_plots(Path(result.directory))

    assert any(p.name == "snapshot_0.svg" for p in written)


def test_emit_plots_without_csv(tmp_path: Path) -> None:
    """Test that a directory without diagnostics is refused."""
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path)


def test_emit_plots_with_empty_csv(run_dir: Path) -> None:
    """Test that a header-only CSV is refused."""
    csv_path = run_dir / "diagnostics.csv"
    csv_path.write_text(csv_path.read_text().splitlines()[0] + "\n")

    with pytest.raises(ValueError, match="no rows"):
        emit_plots(run_dir)


def test_emit_plots_with_corrupt_csv(run_dir: Path) -> None:
    """Test that a corrupt CSV is refused."""
    (run_dir / "diagnostics.csv").write_text("not,a,diagnostics,file\n1,2,3,4\n")

    with pytest.raises(ValueError):
        emit_plots(run_dir)
