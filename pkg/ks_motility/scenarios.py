"""Library of ready-made run configurations on the unit box."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable

from ks_motility.config import RunConfig


def _gaussian_mass_one() -> dict[str, Any]:
    return {"kind": "gaussian", "width": 0.1, "mass": 1.0}


def _config(
    name: str,
    dim: int,
    cells: int,
    u0: dict[str, Any],
    v0: dict[str, Any],
    epsilon: float,
    t_end: float,
    dt: float,
    cadence: int,
    snapshot_cadence: int,
) -> RunConfig:
    return RunConfig.model_validate(
        {
            "name": name,
            "problem": {
                "grid": {"dim": dim, "extents": [1.0] * dim, "cells": [cells] * dim},
                "motility": {"family": "exp_decay", "parameters": [1.0, 0.5]},
                "u0": u0,
                "v0": v0,
                "epsilon": epsilon,
            },
            "time": {"t_end": t_end, "dt": dt},
            "diagnostics": {"cadence": cadence, "weighted": True},
            "output": {
                "directory": str(Path("runs") / name),
                "snapshot_cadence": snapshot_cadence,
                "formats": ["csv", "snapshots", "plots"],
            },
        }
    )


def canonical_2d() -> RunConfig:
    """64 x 64, phi = e^-v + 0.5, gaussian u0 of mass 1, v0 = 1, eps = 0.1, T = 20, dt = 1e-3."""
    return _config(
        "canonical_2d", 2, 64, _gaussian_mass_one(), {"kind": "constant", "value": 1.0},
        epsilon=0.1, t_end=20.0, dt=1e-3, cadence=100, snapshot_cadence=1000,
    )


def canonical_3d() -> RunConfig:
    """The 2D benchmark's data on a 24^3 unit cube, dt = 5e-3, T = 20."""
    return _config(
        "canonical_3d", 3, 24, _gaussian_mass_one(), {"kind": "constant", "value": 1.0},
        epsilon=0.1, t_end=20.0, dt=5e-3, cadence=20, snapshot_cadence=400,
    )


def canonical_1d() -> RunConfig:
    """The 2D benchmark's data on 128 cells of the unit interval up to T = 5."""
    return _config(
        "canonical_1d", 1, 128, _gaussian_mass_one(), {"kind": "constant", "value": 1.0},
        epsilon=0.1, t_end=5.0, dt=1e-3, cadence=10, snapshot_cadence=500,
    )


def uniform_decay() -> RunConfig:
    """u0 = v0 = 1: v decays like (1 + dt)^-n, close to e^-t."""
    return _config(
        "uniform_decay", 1, 16, {"kind": "constant", "value": 1.0},
        {"kind": "constant", "value": 1.0},
        epsilon=0.0, t_end=5.0, dt=1e-2, cadence=1, snapshot_cadence=100,
    )


def constant_state() -> RunConfig:
    """u0 = 1, v0 = 0 is a steady state."""
    return _config(
        "constant_state", 1, 16, {"kind": "constant", "value": 1.0},
        {"kind": "constant", "value": 0.0},
        epsilon=0.0, t_end=1.0, dt=1e-2, cadence=1, snapshot_cadence=50,
    )


def smooth_1d() -> RunConfig:
    """Smooth positive data on 64 cells, used for convergence studies."""
    return _config(
        "smooth_1d", 1, 64,
        {"kind": "random_smooth", "seed": 7, "modes": 4, "amplitude": 0.5, "floor": 0.5},
        {"kind": "gaussian", "width": 0.2, "amplitude": 0.5, "background": 0.5},
        epsilon=0.0, t_end=0.5, dt=1e-3, cadence=10, snapshot_cadence=100,
    )


SCENARIOS: dict[str, Callable[[], RunConfig]] = {
    "canonical_1d": canonical_1d,
    "canonical_2d": canonical_2d,
    "canonical_3d": canonical_3d,
    "uniform_decay": uniform_decay,
    "constant_state": constant_state,
    "smooth_1d": smooth_1d,
}


def get_scenario(name: str) -> RunConfig:
    """Configuration of a named scenario.

    Raises:
        KeyError: If no scenario has that name
    """
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(sorted(SCENARIOS))}")
    return SCENARIOS[name]()
