"""SVG plots of a finished run directory, rendered deterministically."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ks_motility.diagnostics import (  # noqa: E402
    DEFAULT_WINDOW,
    WindowSeries,
    sliding_window_series,
)
from ks_motility.results import (  # noqa: E402
    DIAGNOSTICS_FILE,
    list_snapshots,
    read_diagnostics_csv,
    read_snapshot,
)
from ks_motility.stepper import SimState  # noqa: E402

logger = logging.getLogger(__name__)

PLOT_DIR = "plots"
# fixed salt and no Date metadata keep repeated renders byte-identical
SVG_HASHSALT = "ks-motility"

_SERIES = [
    ("mass_u", "mass of u", False),
    ("sup_v", "sup v", False),
    ("stab_u", "||u - mean(u0)||_inf", True),
    ("entropy_u", "int u ln u", False),
]

_WINDOW_COLUMNS = [
    ("l2_u_sq", "u^2"),
    ("lap_v_sq", "|Lap v|^2"),
    ("grad_v_4", "|grad v|^4"),
    ("v_t_sq", "v_t^2"),
    ("grad_u_43", "|grad u|^(4/3)"),
]


def _save(fig: plt.Figure, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _plot_series(t: np.ndarray, values: np.ndarray, label: str, log: bool, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
    if log:
        positive = values > 0
        ax.semilogy(t[positive], values[positive])
    else:
        ax.plot(t, values)
    ax.set_xlabel("t")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def _plot_windows(columns: dict[str, np.ndarray], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
    t = columns["t"]
    for name, label in _WINDOW_COLUMNS:
        values = columns[name]
        finite = np.isfinite(values)
        if np.count_nonzero(finite) < 2:
            continue
        series = WindowSeries.from_arrays(t[finite], values[finite], DEFAULT_WINDOW)
        ax.semilogy(t[finite], np.maximum(sliding_window_series(series), 1e-300), label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(f"integral over [t - {DEFAULT_WINDOW:g}, t]")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def _mid_plane(values: np.ndarray) -> np.ndarray:
    while values.ndim > 2:
        values = values[..., values.shape[-1] // 2]
    return values


def _plot_snapshot(state: SimState, path: Path) -> Path:
    grid = state.grid
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(6, 3.6), constrained_layout=True)
        x = grid.centers(0)
        ax.plot(x, state.u.values, label="u")
        ax.plot(x, state.v.values, label="v")
        ax.set_xlabel("x")
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, alpha=0.3)
    else:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
        extent = (0.0, grid.extents[1], 0.0, grid.extents[0])
        for ax, name, values in zip(axes, ("u", "v"), (state.u.values, state.v.values)):
            image = ax.imshow(_mid_plane(values), origin="lower", extent=extent, aspect="auto")
            ax.set_title(name)
            fig.colorbar(image, ax=ax)
    fig.suptitle(f"t = {state.t:.6g}")
    return _save(fig, path)


def emit_plots(run_dir: Path) -> list[Path]:
    """Write the time-series, window and snapshot plots of a run directory.

    Raises:
        FileNotFoundError: If the directory has no diagnostics CSV
        ValueError: If the CSV is corrupt or empty
    """
    columns = read_diagnostics_csv(run_dir / DIAGNOSTICS_FILE)
    t = columns["t"]
    if t.size == 0:
        raise ValueError(f"{run_dir / DIAGNOSTICS_FILE} has no rows")

    plt.rcParams["svg.hashsalt"] = SVG_HASHSALT
    out = run_dir / PLOT_DIR
    out.mkdir(parents=True, exist_ok=True)

    written = [
        _plot_series(t, columns[name], label, log, out / f"{name}.svg")
        for name, label, log in _SERIES
    ]
    if t.size >= 2:
        written.append(_plot_windows(columns, out / "windows.svg"))

    snapshots = list_snapshots(run_dir)
    if snapshots:
        picks = sorted({0, len(snapshots) // 2, len(snapshots) - 1})
        for index in picks:
            state = read_snapshot(snapshots[index])
            written.append(_plot_snapshot(state, out / f"snapshot_{index}.svg"))

    logger.info("Wrote %d plot(s) to %s", len(written), out)
    return written
