"""Single runs, epsilon sweeps and long-time studies with artifacts on disk."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field as PydanticField

from ks_motility import __version__
from ks_motility.checks import CheckConfig, RunMonitor, blocking_failures, run_all_checks
from ks_motility.config import RunConfig, resolve_output_dir
from ks_motility.diagnostics import (
    DiagnosticsConfig,
    DiagnosticsRecorder,
    StabilizationReport,
    choose_weighted_params,
    stabilization_from_series,
)
from ks_motility.models import DiagnosticsRecord, Finding, StepParams
from ks_motility.plots import emit_plots
from ks_motility.problem import ProblemSpec, build_problem, certify_bounds
from ks_motility.report import (
    write_longtime_report,
    write_run_report,
    write_sweep_report,
)
from ks_motility.results import (
    DIAGNOSTICS_FILE,
    RunManifest,
    list_snapshots,
    read_snapshot,
    snapshot_path,
    write_diagnostics_csv,
    write_manifest,
    write_snapshot,
)
from ks_motility.stepper import SimState, SolverError, run, suggest_dt

logger = logging.getLogger(__name__)

SWEEP_SLACK = 0.1


class ExitCode(IntEnum):
    """Process exit status of a run, sweep or study."""

    OK = 0
    CONFIG = 2
    SOLVER = 3
    INVARIANT = 4


class RunResult(BaseModel):
    """In-memory outcome of ``run_single``; the manifest is its on-disk echo."""

    name: str
    directory: str
    exit_code: int
    dt: Optional[float] = None
    steps: Optional[int] = None
    records: list[DiagnosticsRecord] = PydanticField(default_factory=list)
    findings: list[Finding] = PydanticField(default_factory=list)
    snapshots: int = 0
    error: Optional[str] = None

    @property
    def final_record(self) -> Optional[DiagnosticsRecord]:
        return self.records[-1] if self.records else None


class SweepReport(BaseModel):
    """Pairwise distances between consecutive members of an epsilon sweep."""

    epsilons: list[float]
    member_dirs: list[str]
    member_exit_codes: list[int]
    distances: list[float] = PydanticField(default_factory=list)
    slack: float = SWEEP_SLACK
    passed: bool = False
    exit_code: int = ExitCode.OK


class LongtimeReport(BaseModel):
    """Decay times of sup v and of the distance of u to its mean."""

    directory: str
    run_exit_code: int
    stabilization: StabilizationReport
    final_stab_u: Optional[float] = None
    final_stab_v: Optional[float] = None
    exit_code: int = ExitCode.OK


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_step_params(config: RunConfig, problem: ProblemSpec) -> StepParams:
    """Step parameters with dt = "auto" resolved through the certified motility bounds."""
    dt = config.time.dt
    if dt == "auto":
        bounds = certify_bounds(problem.phi, max(problem.v0.max(), 0.0))
        dt = suggest_dt(problem, bounds, config.time.safety)
    return StepParams(dt=dt, solver_tol=config.time.solver_tol, max_iters=config.time.max_iters)


def _diagnostics_config(config: RunConfig, problem: ProblemSpec) -> DiagnosticsConfig:
    weighted = None
    if config.diagnostics.weighted:
        bounds = certify_bounds(problem.phi, max(problem.v0.max(), 0.0))
        weighted = choose_weighted_params(config.diagnostics.weighted_p, bounds)
    return DiagnosticsConfig(
        p_values=list(config.diagnostics.p_values),
        weighted=weighted,
        reference_mean=problem.mean_u0,
    )


def run_single(config: RunConfig, output_dir: Optional[Path] = None) -> RunResult:
    """Run one trajectory and write diagnostics, snapshots, report and manifest.

    Config problems map to exit 2, solver failures to exit 3 and failed invariant checks
    to exit 4; the manifest is written in every case and always last.
    """
    directory = output_dir if output_dir is not None else resolve_output_dir(config)
    started_at = _now()
    result = RunResult(name=config.name, directory=str(directory), exit_code=ExitCode.OK)

    try:
        problem = build_problem(config.problem)
        params = resolve_step_params(config, problem)
    except ValueError as e:
        logger.error("Invalid configuration for %s: %s", config.name, e)
        result.exit_code = ExitCode.CONFIG
        result.error = str(e)
        _finish(config, result, directory, started_at)
        return result

    result.dt = params.dt
    directory.mkdir(parents=True, exist_ok=True)
    formats = set(config.output.formats)
    snapshot_cadence = config.output.snapshot_cadence if "snapshots" in formats else 0

    monitor = RunMonitor()
    recorder = DiagnosticsRecorder(
        _diagnostics_config(config, problem), params.dt, config.diagnostics.cadence
    )

    def observer(state: SimState, step_index: int) -> None:
        monitor(state, step_index)
        recorder(state, step_index)
        if snapshot_cadence and step_index % snapshot_cadence == 0:
            write_snapshot(state, snapshot_path(directory, step_index))
            result.snapshots += 1

    try:
        trajectory = run(problem, config.time.t_end, params, observer=observer)
        result.steps = trajectory.steps
    except SolverError as e:
        logger.error("Solver failure in %s: %s", config.name, e)
        result.exit_code = ExitCode.SOLVER
        result.error = str(e)

    result.records = recorder.records
    if result.exit_code == ExitCode.OK:
        result.findings = run_all_checks(
            monitor, recorder.records, CheckConfig(mass_rel_tol=10 * params.solver_tol)
        )
        failures = blocking_failures(result.findings)
        if failures:
            logger.error(
                "%d invariant check(s) failed: %s",
                len(failures),
                ", ".join(f.id for f in failures),
            )
            result.exit_code = ExitCode.INVARIANT

    if formats & {"csv", "plots"}:
        write_diagnostics_csv(recorder.records, directory / DIAGNOSTICS_FILE)
    write_run_report(result, directory / "report.md")
    if "plots" in formats and result.records:
        emit_plots(directory)

    _finish(config, result, directory, started_at)
    return result


def _finish(config: RunConfig, result: RunResult, directory: Path, started_at: str) -> None:
    status = {
        ExitCode.OK: "passed",
        ExitCode.CONFIG: "config_error",
        ExitCode.SOLVER: "solver_error",
        ExitCode.INVARIANT: "invariant_violation",
    }[ExitCode(result.exit_code)]
    manifest = RunManifest(
        name=config.name,
        config=config.model_dump(mode="json"),
        code_version=__version__,
        started_at=started_at,
        finished_at=_now(),
        exit_code=result.exit_code,
        status=status,
        dt=result.dt,
        steps=result.steps,
        diagnostics_rows=len(result.records),
        snapshots=result.snapshots,
        final_record=result.final_record,
        findings=result.findings,
        error=result.error,
    )
    write_manifest(manifest, directory)
    logger.info("Run %s finished with status %s in %s", config.name, status, directory)


def _check_eps_list(eps_list: Sequence[float]) -> None:
    if len(eps_list) < 2:
        raise ValueError("an epsilon sweep needs at least two values")
    if any(not math.isfinite(e) or e < 0 for e in eps_list):
        raise ValueError("epsilon values must be finite and >= 0")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError(f"epsilon values must be nonincreasing, got {list(eps_list)}")


def _member_config(config: RunConfig, epsilon: float, dt: float) -> RunConfig:
    data = config.model_dump()
    data["problem"]["epsilon"] = epsilon
    data["time"]["dt"] = dt
    output = data["output"]
    if output["snapshot_cadence"] == 0:
        output["snapshot_cadence"] = config.diagnostics.cadence
    if "snapshots" not in output["formats"]:
        output["formats"] = list(output["formats"]) + ["snapshots"]
    data["name"] = f"{config.name}_eps_{epsilon:g}"
    return RunConfig.model_validate(data)


def trajectory_distance(first: Path, second: Path) -> float:
    """max over shared snapshot times of ||u1 - u2||_L2 + ||v1 - v2||_inf.

    Raises:
        ValueError: If the two runs stored different snapshot schedules
    """
    first_files = list_snapshots(first)
    second_files = list_snapshots(second)
    if [p.name for p in first_files] != [p.name for p in second_files]:
        raise ValueError(f"snapshot schedules differ between {first} and {second}")
    distance = 0.0
    for a_path, b_path in zip(first_files, second_files):
        a = read_snapshot(a_path)
        b = read_snapshot(b_path)
        du = a.u.values - b.u.values
        l2 = math.sqrt(float(np.sum(du * du)) * a.grid.cell_volume)
        sup = float(np.max(np.abs(a.v.values - b.v.values)))
        distance = max(distance, l2 + sup)
    return distance


def _run_member(task: tuple[RunConfig, Path]) -> RunResult:
    member, directory = task
    return run_single(member, directory)


def run_epsilon_sweep(
    config: RunConfig, eps_list: Sequence[float], workers: Optional[int] = None
) -> SweepReport:
    """Run one trajectory per epsilon on a shared grid and dt and compare neighbours.

    Passes iff every member exits cleanly and d_{j+1} <= 1.1 d_j for all j.

    Raises:
        ValueError: If eps_list is shorter than two, negative or increasing
    """
    _check_eps_list(eps_list)
    base = resolve_output_dir(config)
    problem = build_problem(config.problem)
    dt = resolve_step_params(config, problem).dt

    tasks = [
        (_member_config(config, eps, dt), base / f"eps_{j:02d}_{eps:g}")
        for j, eps in enumerate(eps_list)
    ]
    n_workers = workers or config.workers
    logger.info("Sweeping %d epsilon values with %d worker(s)", len(tasks), n_workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_member, tasks))
    else:
        results = [_run_member(task) for task in tasks]

    report = SweepReport(
        epsilons=list(eps_list),
        member_dirs=[r.directory for r in results],
        member_exit_codes=[r.exit_code for r in results],
    )
    failed = [r.exit_code for r in results if r.exit_code != ExitCode.OK]
    if failed:
        report.exit_code = max(failed)
    else:
        report.distances = [
            trajectory_distance(Path(a.directory), Path(b.directory))
            for a, b in zip(results, results[1:])
        ]
        report.passed = all(
            later <= (1.0 + SWEEP_SLACK) * earlier + 1e-14
            for earlier, later in zip(report.distances, report.distances[1:])
        )
        report.exit_code = ExitCode.OK if report.passed else ExitCode.INVARIANT

    write_sweep_report(report, base)
    return report


def run_longtime_study(
    config: RunConfig,
    eta_list: Optional[Sequence[float]] = None,
    u_eta_list: Optional[Sequence[float]] = None,
) -> LongtimeReport:
    """Run once and report, per eta, the first time after which sup v stays <= eta.

    The same is reported for ||u - mean(u0)||_inf against ``u_eta_list``. Either list
    defaults to the configured v or u thresholds. Thresholds never reached are reported
    as not reached.
    """
    if eta_list is None:
        eta_list = config.diagnostics.v_thresholds
    if not eta_list or any(eta <= 0 for eta in eta_list):
        raise ValueError("eta values must be positive and at least one must be given")
    u_thresholds = list(u_eta_list) if u_eta_list else list(config.diagnostics.u_thresholds)

    directory = resolve_output_dir(config)
    result = run_single(config, directory)
    records = result.records
    stabilization = stabilization_from_series(
        [r.t for r in records],
        [r.stab_u for r in records],
        [r.stab_v for r in records],
        u_thresholds,
        list(eta_list),
    )
    report = LongtimeReport(
        directory=str(directory),
        run_exit_code=result.exit_code,
        stabilization=stabilization,
        final_stab_u=records[-1].stab_u if records else None,
        final_stab_v=records[-1].stab_v if records else None,
        exit_code=result.exit_code,
    )
    write_longtime_report(report, directory)
    return report
