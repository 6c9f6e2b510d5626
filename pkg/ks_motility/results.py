"""Persistence of run artifacts: diagnostics CSV, binary snapshots and the run manifest."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, Field as PydanticField

from ks_motility.grid import Field, build_grid
from ks_motility.models import DiagnosticsRecord, Finding
from ks_motility.stepper import SimState

DIAGNOSTICS_FILE = "diagnostics.csv"
MANIFEST_FILE = "manifest.json"
SNAPSHOT_DIR = "snapshots"

SNAPSHOT_MAGIC = b"MLAB"
SNAPSHOT_VERSION = 1

_LEADING_COLUMNS = [
    "t",
    "mass_u",
    "sup_v",
    "dual_norm_sq",
    "l2_u_sq",
    "grad_v_sq",
    "lap_v_sq",
    "grad_v_4",
    "v_t_sq",
]
_TRAILING_COLUMNS = ["entropy_u", "fisher_u", "grad_u_43", "weighted", "stab_u", "stab_v"]


def _p_label(p: float) -> str:
    return f"{p:g}".replace(".", "_")


def diagnostics_columns(p_values: list[float]) -> list[str]:
    """CSV header: fixed leading columns, one lp_u_p<p> per exponent, fixed trailing columns."""
    return _LEADING_COLUMNS + [f"lp_u_p{_p_label(p)}" for p in p_values] + _TRAILING_COLUMNS


def _format(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.17g}"


def _row(record: DiagnosticsRecord) -> dict[str, str]:
    data = record.model_dump()
    row = {name: _format(data[name]) for name in _LEADING_COLUMNS + _TRAILING_COLUMNS}
    for p, value in zip(record.p_values, record.lp_u):
        row[f"lp_u_p{_p_label(p)}"] = _format(value)
    return row


def write_diagnostics_csv(records: list[DiagnosticsRecord], path: Path) -> None:
    """Write one row per record, 17 significant digits, empty cells for absent values."""
    p_values = records[0].p_values if records else []
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=diagnostics_columns(p_values), lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(_row(record))


def read_diagnostics_csv(path: Path) -> dict[str, np.ndarray]:
    """Read a diagnostics CSV into one float array per column (NaN for empty cells).

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the header lacks required columns or a cell is not numeric
    """
    if not path.exists():
        raise FileNotFoundError(f"Diagnostics not found at {path}")

    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in _LEADING_COLUMNS + _TRAILING_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path} is missing columns: {', '.join(missing)}")
        columns: dict[str, list[float]] = {name: [] for name in header}
        for line_no, row in enumerate(reader, start=2):
            for name in header:
                cell = row.get(name)
                if cell is None:
                    raise ValueError(f"{path}:{line_no}: row is truncated")
                try:
                    columns[name].append(float(cell) if cell != "" else math.nan)
                except ValueError as e:
                    raise ValueError(f"{path}:{line_no}: column {name} is not numeric") from e
    return {name: np.asarray(values) for name, values in columns.items()}


def snapshot_path(directory: Path, index: int) -> Path:
    return directory / SNAPSHOT_DIR / f"snapshot_{index:06d}.mlab"


def write_snapshot(state: SimState, path: Path) -> None:
    """Write the MLAB binary snapshot of a state.

    Layout (little-endian): b"MLAB", version u32, dim u32, N per axis u32, L per axis f64,
    t f64, epsilon f64, then u and v as f64 in row-major order.
    """
    grid = state.grid
    header = (
        SNAPSHOT_MAGIC
        + struct.pack("<II", SNAPSHOT_VERSION, grid.dim)
        + struct.pack(f"<{grid.dim}I", *grid.cells)
        + struct.pack(f"<{grid.dim}d", *grid.extents)
        + struct.pack("<dd", state.t, state.epsilon)
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(state.u.values, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(state.v.values, dtype="<f8").tobytes())


def read_snapshot(path: Path) -> SimState:
    """Read an MLAB snapshot back into a state.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the magic, version or payload size is wrong
    """
    if not path.exists():
        raise FileNotFoundError(f"Snapshot not found at {path}")
    data = path.read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not an MLAB snapshot")
    try:
        version, dim = struct.unpack_from("<II", data, 4)
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        offset = 12
        cells = struct.unpack_from(f"<{dim}I", data, offset)
        offset += 4 * dim
        extents = struct.unpack_from(f"<{dim}d", data, offset)
        offset += 8 * dim
        t, epsilon = struct.unpack_from("<dd", data, offset)
        offset += 16
    except struct.error as e:
        raise ValueError(f"{path}: truncated snapshot header") from e

    grid = build_grid(dim, list(extents), list(cells))
    payload = np.frombuffer(data, dtype="<f8", offset=offset)
    if payload.size != 2 * grid.size:
        raise ValueError(
            f"{path}: expected {2 * grid.size} values, found {payload.size}"
        )
    u = Field(grid, payload[: grid.size].reshape(grid.shape).copy())
    v = Field(grid, payload[grid.size :].reshape(grid.shape).copy())
    return SimState(u=u, v=v, t=t, epsilon=epsilon)


def list_snapshots(directory: Path) -> list[Path]:
    """Snapshot files of a run directory in step order."""
    paths = (directory / SNAPSHOT_DIR).glob("snapshot_*.mlab")
    return sorted(paths, key=lambda path: int(path.stem.split("_")[1]))


class RunManifest(BaseModel):
    """Summary of one run, written once after everything else."""

    name: str
    config: dict[str, Any]
    code_version: str
    started_at: str
    finished_at: str
    exit_code: int
    status: str
    dt: Optional[float] = None
    steps: Optional[int] = None
    diagnostics_rows: int = 0
    snapshots: int = 0
    final_record: Optional[DiagnosticsRecord] = None
    findings: list[Finding] = PydanticField(default_factory=list)
    error: Optional[str] = None


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_FILE
    path.write_text(manifest.model_dump_json(indent=2))
    return path


def load_manifest(directory: Path) -> RunManifest:
    """Load manifest.json from a run directory.

    Raises:
        FileNotFoundError: If the manifest doesn't exist
        ValueError: If it is not a valid manifest
    """
    path = directory / MANIFEST_FILE
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found at {path}")
    with open(path) as f:
        return RunManifest.model_validate(json.load(f))
