"""Command-line interface for ks-motility."""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from ks_motility.config import RunConfig, dump_config, load_config
from ks_motility.harness import (
    ExitCode,
    RunResult,
    run_epsilon_sweep,
    run_longtime_study,
    run_single,
)
from ks_motility.models import OdeBoundKind
from ks_motility.odebounds import parse_seed_range, verify_suite
from ks_motility.plots import emit_plots
from ks_motility.report import write_ode_table
from ks_motility.scenarios import SCENARIOS, get_scenario

# Create a Typer app for use in tests
_typer_app = typer.Typer(no_args_is_help=True)
_odebounds_app = typer.Typer(no_args_is_help=True, help="Brute-force checks of the ODE bounds")
_typer_app.add_typer(_odebounds_app, name="odebounds")

console = Console()


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _load(config_path: Path) -> RunConfig:
    try:
        return load_config(config_path)
    except FileNotFoundError as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        raise typer.Exit(code=ExitCode.CONFIG)
    except ValueError as e:
        console.print(f"[bold red]Invalid configuration:[/bold red] {e}")
        raise typer.Exit(code=ExitCode.CONFIG)


def _parse_floats(text: str, option: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        console.print(f"[bold red]Error:[/bold red] {option} expects comma-separated numbers")
        raise typer.Exit(code=ExitCode.CONFIG)


def _display_run(result: RunResult) -> None:
    """Display the invariant checks of a run."""
    table = Table(title=f"Run {result.name}", show_header=True, header_style="bold magenta")
    table.add_column("Check", style="cyan")
    table.add_column("Severity")
    table.add_column("Result", justify="center")
    table.add_column("Details")
    for finding in result.findings:
        table.add_row(
            finding.id,
            str(finding.severity).upper(),
            "✅" if finding.passed else "❌",
            finding.description,
        )
    console.print(table)
    if result.error:
        console.print(f"[bold red]Error:[/bold red] {result.error}")
    console.print()


@_typer_app.command()
def run(
    config_path: Path = typer.Argument(..., help="Path to the run configuration (YAML)"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log every solver step"),
) -> None:
    """Run one simulation and write diagnostics, snapshots, report and manifest.

    \b
    Example:
        ks-motility run configs/canonical_2d.yaml
    """
    _configure_logging(verbose)
    config = _load(config_path)
    console.print(f"\n[bold blue]ks-motility[/bold blue] run [cyan]{config.name}[/cyan]\n")

    with console.status("[bold green]Simulating..."):
        result = run_single(config)

    _display_run(result)
    console.print(f"✓ Artifacts: [cyan]{result.directory}[/cyan]")
    if result.exit_code != ExitCode.OK:
        raise typer.Exit(code=result.exit_code)
    console.print("\n[bold green]✓ Run complete![/bold green]\n")


@_typer_app.command()
def sweep(
    config_path: Path = typer.Argument(..., help="Path to the run configuration (YAML)"),
    eps: str = typer.Option(..., "--eps", help="Nonincreasing epsilon list, e.g. 1,0.25,0"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1, help="Parallel runs"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Run the configuration once per epsilon and compare neighbouring trajectories."""
    _configure_logging(verbose)
    config = _load(config_path)
    eps_list = _parse_floats(eps, "--eps")

    with console.status("[bold green]Running epsilon sweep..."):
        try:
            report = run_epsilon_sweep(config, eps_list, workers)
        except ValueError as e:
            console.print(f"[bold red]Error:[/bold red] {e}")
            raise typer.Exit(code=ExitCode.CONFIG)

    table = Table(title="Epsilon sweep", show_header=True, header_style="bold magenta")
    table.add_column("epsilon pair", style="cyan")
    table.add_column("distance", justify="right", style="green")
    for j, distance in enumerate(report.distances):
        table.add_row(f"{eps_list[j]:g} / {eps_list[j + 1]:g}", f"{distance:.3e}")
    console.print(table)

    if report.exit_code != ExitCode.OK:
        console.print("[bold red]✗ Sweep failed[/bold red]")
        raise typer.Exit(code=report.exit_code)
    console.print("\n[bold green]✓ Sweep complete![/bold green]\n")


@_typer_app.command()
def longtime(
    config_path: Path = typer.Argument(..., help="Path to the run configuration (YAML)"),
    eta: Optional[str] = typer.Option(
        None, "--eta", help="Thresholds for sup v, e.g. 0.5,0.1,0.02 (default: from config)"
    ),
    u_eta: Optional[str] = typer.Option(
        None, "--u-eta", help="Thresholds for ||u - mean(u0)||_inf (default: from config)"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Report the times after which sup v and the distance of u to its mean stay small."""
    _configure_logging(verbose)
    config = _load(config_path)
    eta_list = _parse_floats(eta, "--eta") if eta else None
    u_eta_list = _parse_floats(u_eta, "--u-eta") if u_eta else None

    with console.status("[bold green]Running long-time study..."):
        try:
            report = run_longtime_study(config, eta_list, u_eta_list)
        except ValueError as e:
            console.print(f"[bold red]Error:[/bold red] {e}")
            raise typer.Exit(code=ExitCode.CONFIG)

    table = Table(title="Decay times", show_header=True, header_style="bold magenta")
    table.add_column("Quantity", style="cyan")
    table.add_column("Threshold", justify="right")
    table.add_column("Stays below from", justify="right", style="green")
    for quantity, decay in (
        ("sup v", report.stabilization.v_decay),
        ("||u - mean||", report.stabilization.u_decay),
    ):
        for entry in decay:
            when = f"{entry.time:.4g}" if entry.reached else "not reached"
            table.add_row(quantity, f"{entry.threshold:g}", when)
    console.print(table)

    if report.exit_code != ExitCode.OK:
        raise typer.Exit(code=report.exit_code)
    console.print("\n[bold green]✓ Study complete![/bold green]\n")


@_typer_app.command()
def plots(
    run_dir: Path = typer.Argument(..., help="Run directory containing diagnostics.csv"),
) -> None:
    """Render SVG plots for a finished run."""
    try:
        written = emit_plots(run_dir)
    except (FileNotFoundError, ValueError) as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        raise typer.Exit(code=ExitCode.CONFIG)
    console.print(f"✓ Wrote {len(written)} plot(s) to [cyan]{run_dir / 'plots'}[/cyan]")


@_typer_app.command()
def scenario(
    name: str = typer.Argument(..., help=f"One of: {', '.join(sorted(SCENARIOS))}"),
    output: Path = typer.Argument(..., help="Where to write the YAML configuration"),
) -> None:
    """Write the configuration of a built-in scenario."""
    try:
        config = get_scenario(name)
    except KeyError as e:
        console.print(f"[bold red]Error:[/bold red] {e.args[0]}")
        raise typer.Exit(code=ExitCode.CONFIG)
    dump_config(config, output)
    console.print(f"✓ Scenario [cyan]{name}[/cyan] written to [cyan]{output}[/cyan]")


@_odebounds_app.command()
def verify(
    seed_range: str = typer.Option("0..199", "--seed-range", help="Inclusive range a..b"),
    kind: Optional[list[OdeBoundKind]] = typer.Option(
        None, "--kind", help="Restrict to these bounds (repeatable)"
    ),
    n_steps: int = typer.Option(1000, "--n-steps", min=1000, help="RK4 report steps"),
    workers: int = typer.Option(1, "--workers", min=1),
    output: Optional[Path] = typer.Option(None, "--output", help="Write the table as CSV"),
) -> None:
    """Verify the ODE bounds on randomized problems with an RK4 oracle."""
    try:
        seeds = parse_seed_range(seed_range)
    except ValueError as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        raise typer.Exit(code=ExitCode.CONFIG)
    kinds = kind or list(OdeBoundKind)

    with console.status(f"[bold green]Verifying {len(seeds) * len(kinds)} problems..."):
        reports = verify_suite(seeds, kinds, n_steps, workers)

    table = Table(title="ODE bound suite", show_header=True, header_style="bold magenta")
    table.add_column("Bound", style="cyan")
    table.add_column("Problems", justify="right")
    table.add_column("Passed", justify="right", style="green")
    table.add_column("Worst relative excess", justify="right")
    for k in kinds:
        mine = [r for r in reports if r.kind == k]
        worst = max(r.max_relative_excess for r in mine)
        table.add_row(k.value, str(len(mine)), str(sum(r.passed for r in mine)), f"{worst:.3e}")
    console.print(table)

    if output is not None:
        write_ode_table(reports, output)
        console.print(f"✓ Table: [cyan]{output}[/cyan]")

    if not all(r.passed for r in reports):
        console.print("[bold red]✗ Some bounds were exceeded[/bold red]")
        raise typer.Exit(code=ExitCode.INVARIANT)
    console.print("\n[bold green]✓ All bounds hold![/bold green]\n")


def app() -> None:
    """Entry point for the CLI."""
    _typer_app()


# Expose for testing
__all__ = ["app", "_typer_app"]


if __name__ == "__main__":
    app()
