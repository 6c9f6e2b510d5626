"""Per-run invariant checks for simulated trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ks_motility.models import DiagnosticsRecord, Finding, Severity
from ks_motility.stepper import SimState


@dataclass
class CheckConfig:
    """Tolerances for invariant checks."""

    # relative drift of the mass of u; runs pass 10 * solver tolerance
    mass_rel_tol: float = 1e-10

    # negative values allowed down to -slack * initial sup
    positivity_rel_slack: float = 1e-13

    # allowed per-step increase of sup v
    vsup_slack: float = 1e-12

    entropy_slack: float = 1e-9
    dual_rel_slack: float = 1e-6


class RunMonitor:
    """Observer collecting cheap per-step quantities for the invariant checks."""

    def __init__(self) -> None:
        self.times: list[float] = []
        self.mass: list[float] = []
        self.min_u: list[float] = []
        self.min_v: list[float] = []
        self.sup_u: list[float] = []
        self.sup_v: list[float] = []
        self.domain_volume = 0.0

    def __call__(self, state: SimState, step_index: int) -> None:
        u = state.u.values
        v = state.v.values
        self.domain_volume = state.grid.volume
        self.times.append(state.t)
        self.mass.append(float(np.sum(u)) * state.grid.cell_volume)
        self.min_u.append(float(u.min()))
        self.min_v.append(float(v.min()))
        self.sup_u.append(float(u.max()))
        self.sup_v.append(float(np.max(np.abs(v))))


def check_mass_conservation(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """Relative drift of the integral of u over all steps."""
    mass0 = monitor.mass[0]
    drift = max(abs(m - mass0) for m in monitor.mass) / mass0
    passed = drift <= config.mass_rel_tol
    return [
        Finding(
            id="MASS_CONSERVATION",
            severity=Severity.ERROR,
            passed=passed,
            title="Mass of u is conserved" if passed else "Mass of u drifted",
            description=(
                f"Maximum relative drift of the integral of u is {drift:.3e} "
                f"(tolerance {config.mass_rel_tol:.1e})."
            ),
            metadata={"max_relative_drift": drift, "tolerance": config.mass_rel_tol},
        )
    ]


def check_positivity(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """Minimum of u and v over all steps against a slack scaled by the initial sup."""
    findings: list[Finding] = []
    for name, minima, sup0 in (
        ("u", monitor.min_u, monitor.sup_u[0]),
        ("v", monitor.min_v, monitor.sup_v[0]),
    ):
        lowest = min(minima)
        floor = -config.positivity_rel_slack * (sup0 if sup0 > 0 else 1.0)
        passed = lowest >= floor
        findings.append(
            Finding(
                id=f"POSITIVITY_{name.upper()}",
                severity=Severity.ERROR,
                passed=passed,
                title=f"{name} stays nonnegative" if passed else f"{name} became negative",
                description=f"Minimum of {name} over the run is {lowest:.3e} (floor {floor:.1e}).",
                metadata={"minimum": lowest, "floor": floor},
            )
        )
    return findings


def check_vsup_monotone(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """sup v must not increase from one step to the next."""
    increases = np.diff(np.asarray(monitor.sup_v))
    worst = float(increases.max()) if increases.size else 0.0
    passed = worst <= config.vsup_slack
    return [
        Finding(
            id="VSUP_MONOTONE",
            severity=Severity.ERROR,
            passed=passed,
            title="sup v is nonincreasing" if passed else "sup v increased",
            description=(
                f"Largest per-step increase of sup v is {worst:.3e} "
                f"(slack {config.vsup_slack:.1e})."
            ),
            metadata={"max_increase": worst, "slack": config.vsup_slack},
        )
    ]


def check_entropy_bounds(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """-|Omega|/e <= int u ln u <= int u^2 at every record."""
    lower = -monitor.domain_volume / math.e - config.entropy_slack
    violations = [
        r.t
        for r in records
        if r.entropy_u < lower or r.entropy_u > r.l2_u_sq + config.entropy_slack
    ]
    passed = not violations
    return [
        Finding(
            id="ENTROPY_BOUNDS",
            severity=Severity.WARN,
            passed=passed,
            title="Entropy bounds hold" if passed else "Entropy bounds violated",
            description=(
                f"{len(violations)} of {len(records)} records violate "
                "-|Omega|/e <= int u ln u <= int u^2."
            ),
            metadata={"violation_times": violations[:20]},
        )
    ]


def check_dual_norm_dominance(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """|A^{-1/2} u|^2 <= int u^2 at every record."""
    violations = [
        r.t for r in records if r.dual_norm_sq > r.l2_u_sq * (1.0 + config.dual_rel_slack)
    ]
    passed = not violations
    return [
        Finding(
            id="DUAL_NORM_DOMINANCE",
            severity=Severity.WARN,
            passed=passed,
            title="Dual norm is dominated by the L2 norm"
            if passed
            else "Dual norm exceeds the L2 norm",
            description=f"{len(violations)} of {len(records)} records violate the dominance.",
            metadata={"violation_times": violations[:20]},
        )
    ]


def run_all_checks(
    monitor: RunMonitor, records: list[DiagnosticsRecord], config: CheckConfig
) -> list[Finding]:
    """Run every invariant check on a finished run.

    Args:
        monitor: Per-step quantities collected during the run
        records: Diagnostics records at the configured cadence
        config: Check tolerances

    Returns:
        One or more findings per check, passed or not
    """
    if not monitor.mass:
        raise ValueError("run monitor saw no states")

    checks: list[Callable[[RunMonitor, list[DiagnosticsRecord], CheckConfig], list[Finding]]] = [
        check_mass_conservation,
        check_positivity,
        check_vsup_monotone,
        check_entropy_bounds,
        check_dual_norm_dominance,
    ]

    all_findings: list[Finding] = []
    for check in checks:
        all_findings.extend(check(monitor, records, config))
    return all_findings


def blocking_failures(findings: list[Finding]) -> list[Finding]:
    """Failed checks with ERROR severity; any of these fails the run."""
    return [f for f in findings if not f.passed and f.severity == Severity.ERROR]
