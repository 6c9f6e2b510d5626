"""Markdown, JSON and CSV reports for runs, sweeps, long-time studies and the ODE suite."""

from __future__ import annotations

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any

from ks_motility.models import Finding, Severity, VerificationReport

if TYPE_CHECKING:
    from ks_motility.harness import LongtimeReport, RunResult, SweepReport

SWEEP_REPORT = "sweep_report"
LONGTIME_REPORT = "longtime_report"

_SEVERITY_MARKS = {
    Severity.ERROR: "🔴 ERROR",
    Severity.WARN: "⚠️  WARN",
    Severity.INFO: "ℹ️  INFO",
}

ODE_TABLE_COLUMNS = [
    "kind",
    "seed",
    "a",
    "b",
    "lam",
    "y0",
    "n_steps",
    "max_excess",
    "max_relative_excess",
    "richardson_diff",
    "overflow",
    "passed",
]


def _fmt(value: Any) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _finding_lines(findings: list[Finding]) -> list[str]:
    lines: list[str] = []
    lines.append("| Check | Severity | Result | Details |")
    lines.append("|-------|----------|--------|---------|")
    for finding in findings:
        result = "✅ pass" if finding.passed else "❌ fail"
        lines.append(
            f"| `{finding.id}` | {finding.severity} | {result} | {finding.description} |"
        )
    lines.append("")
    return lines


def write_run_report(result: RunResult, output_path: Path) -> None:
    """Markdown summary of one run: status, invariant checks and the final diagnostics."""
    lines: list[str] = []

    lines.append(f"# Run report: {result.name}")
    lines.append("")
    lines.append(f"**Generated:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    lines.append(f"**Directory:** `{result.directory}`")
    lines.append("")

    lines.append("## Summary")
    lines.append("")
    lines.append(f"- **Exit code:** {result.exit_code}")
    lines.append(f"- **Time step:** {_fmt(result.dt)}")
    lines.append(f"- **Steps:** {_fmt(result.steps)}")
    lines.append(f"- **Diagnostics rows:** {len(result.records)}")
    lines.append(f"- **Snapshots:** {result.snapshots}")
    if result.error:
        lines.append(f"- **Error:** {result.error}")
    lines.append("")

    failed = [f for f in result.findings if not f.passed]
    if result.findings:
        lines.append("**Failed checks by severity:**")
        for severity, mark in _SEVERITY_MARKS.items():
            count = len([f for f in failed if f.severity == severity])
            lines.append(f"- {mark}: {count}")
        lines.append("")

        lines.append("## Invariant checks")
        lines.append("")
        lines.extend(_finding_lines(result.findings))

    final = result.final_record
    if final is not None:
        lines.append("## Final diagnostics")
        lines.append("")
        lines.append("| Quantity | Value |")
        lines.append("|----------|-------|")
        data = final.model_dump()
        for name in (
            "t",
            "mass_u",
            "sup_v",
            "l2_u_sq",
            "dual_norm_sq",
            "entropy_u",
            "stab_u",
            "stab_v",
            "min_u",
            "min_v",
            "weighted",
        ):
            lines.append(f"| `{name}` | {_fmt(data[name])} |")
        lines.append("")

    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text("\n".join(lines))


def _write_json(payload: dict[str, Any], output_path: Path) -> None:
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w") as f:
        json.dump(payload, f, indent=2)


def write_sweep_report(report: SweepReport, directory: Path) -> None:
    """sweep_report.json and sweep_report.md in the sweep's base directory."""
    _write_json(
        {
            "metadata": {"timestamp": datetime.now().isoformat()},
            "report": report.model_dump(mode="json"),
        },
        directory / f"{SWEEP_REPORT}.json",
    )

    lines: list[str] = []
    lines.append("# Epsilon sweep")
    lines.append("")
    lines.append(f"**Result:** {'✅ passed' if report.passed else '❌ failed'}")
    lines.append(f"**Exit code:** {report.exit_code}")
    lines.append("")
    lines.append("## Members")
    lines.append("")
    lines.append("| epsilon | Exit code | Directory |")
    lines.append("|---------|-----------|-----------|")
    for eps, code, member in zip(report.epsilons, report.member_exit_codes, report.member_dirs):
        lines.append(f"| {eps:g} | {code} | `{member}` |")
    lines.append("")

    if report.distances:
        lines.append("## Distances between neighbours")
        lines.append("")
        lines.append(
            f"d_j = max over snapshot times of ||u_j - u_(j+1)||_L2 + ||v_j - v_(j+1)||_inf; "
            f"passes iff d_(j+1) <= {1 + report.slack:g} d_j."
        )
        lines.append("")
        lines.append("| j | epsilon pair | d_j |")
        lines.append("|---|--------------|-----|")
        for j, d in enumerate(report.distances):
            pair = f"{report.epsilons[j]:g} / {report.epsilons[j + 1]:g}"
            lines.append(f"| {j} | {pair} | {d:.6e} |")
        lines.append("")

    (directory / f"{SWEEP_REPORT}.md").write_text("\n".join(lines))


def write_longtime_report(report: LongtimeReport, directory: Path) -> None:
    """longtime_report.json and longtime_report.md in the run directory."""
    _write_json(
        {
            "metadata": {"timestamp": datetime.now().isoformat()},
            "report": report.model_dump(
                mode="json", exclude={"stabilization": {"times", "stab_u", "stab_v"}}
            ),
        },
        directory / f"{LONGTIME_REPORT}.json",
    )

    stabilization = report.stabilization
    lines: list[str] = []
    lines.append("# Long-time behaviour")
    lines.append("")
    lines.append(f"- **Run exit code:** {report.run_exit_code}")
    lines.append(f"- **Final ||u - mean(u0)||_inf:** {_fmt(report.final_stab_u)}")
    lines.append(f"- **Final ||v||_inf:** {_fmt(report.final_stab_v)}")
    lines.append("")

    for title, decay in (
        ("sup v", stabilization.v_decay),
        ("||u - mean(u0)||_inf", stabilization.u_decay),
    ):
        lines.append(f"## Decay of {title}")
        lines.append("")
        lines.append("| Threshold | Time from which it stays below |")
        lines.append("|-----------|--------------------------------|")
        for entry in decay:
            when = f"{entry.time:.6g}" if entry.reached else "not reached"
            lines.append(f"| {entry.threshold:g} | {when} |")
        lines.append("")

    (directory / f"{LONGTIME_REPORT}.md").write_text("\n".join(lines))


def write_ode_table(reports: list[VerificationReport], output_path: Path) -> None:
    """Pass/fail table of an ODE bound suite, one row per verified problem."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ODE_TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            row = report.model_dump()
            row["kind"] = report.kind.value
            writer.writerow({name: row[name] for name in ODE_TABLE_COLUMNS})
