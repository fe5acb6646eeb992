"""Command-line interface for markov-poisson.

This module provides the CLI interface using Typer with Rich formatting.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from markov_poisson import __version__
from markov_poisson.chain import (
    BUILTIN_FAMILIES,
    ChainSpec,
    FamilyParams,
    ForcingFunction,
    Structure,
    make_builtin,
)
from markov_poisson.config import SweepConfig, example_config, get_default_config_path
from markov_poisson.errors import (
    ErrorCode,
    MarkovPoissonError,
    format_error,
    handle_error,
)
from markov_poisson.golden import Example52Golden, Example53Golden, example_closed_forms
from markov_poisson.simulation import simulate_return
from markov_poisson.solver import FiniteAnalysis, analyze
from markov_poisson.structured import (
    birth_death_variance,
    single_birth_poisson,
    single_death_poisson,
    single_death_variance,
)
from markov_poisson.sweep import SweepReport, Verdict, run_sweep
from markov_poisson.truncation import FiniteKernel, build_kernel

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NOT_CONVERGED = 4

# Initialize console
console = Console()

# Create Typer app
app = typer.Typer(
    name="markov-poisson",
    help="Poisson's equation and CLT variance constants via augmented truncation",
    add_completion=False,
)

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="[%(levelname)s] %(message)s",
)
logger = logging.getLogger(__name__)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"markov-poisson v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Enable verbose output"
    ),
    version: bool = typer.Option(
        None, "--version", callback=version_callback, is_eager=True
    ),
) -> None:
    """markov-poisson - Poisson's equation for countable-state Markov chains."""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


ConfigOption = typer.Option(None, "--config", "-c", help="JSON or YAML run configuration")


@app.command()
def sweep(
    config: Path | None = ConfigOption,
    threads: int | None = typer.Option(
        None, "--threads", "-t", min=1, help="Levels evaluated concurrently"
    ),
    csv_path: Path | None = typer.Option(None, "--csv", help="CSV report path"),
    json_path: Path | None = typer.Option(None, "--json", help="JSON report path"),
    expect_converged: bool = typer.Option(
        False, "--expect-converged", help="Exit 4 unless every column converges"
    ),
) -> None:
    """Sweep truncation levels and diagnose convergence."""
    cfg = _load_config(
        config,
        {
            "threads": threads,
            "csv": csv_path,
            "json": json_path,
            "expect_converged": expect_converged,
        },
    )
    try:
        report = run_sweep(cfg, show_progress=console.is_terminal, console=console)
        written = report.write()
    except Exception as e:
        _fail(e)

    _print_sweep(report)
    for path in written:
        console.print(f"[green]✓[/green] Report written: {path}")

    if len(report.failed) == len(report.rows):
        console.print("[red]Error:[/red] every level failed")
        raise typer.Exit(code=EXIT_NUMERICAL)
    if cfg.expect_converged and report.overall in (
        Verdict.DIVERGING,
        Verdict.OSCILLATING,
    ):
        console.print(f"[red]Error:[/red] sweep is {report.overall.value}")
        raise typer.Exit(code=EXIT_NOT_CONVERGED)


@app.command()
def solve(
    config: Path | None = ConfigOption,
    level: int | None = typer.Option(None, "--level", "-n", min=0, help="Truncation level"),
    json_path: Path | None = typer.Option(None, "--json", help="Write the solution as JSON"),
) -> None:
    """Solve Poisson's equation at one truncation level."""
    cfg = _load_config(config, {"level": level})
    try:
        family, spec, g, kernel, analysis = _solve_level(cfg)
        limit = _structured_solution(spec, g, cfg.anchor, kernel.size)
    except Exception as e:
        _fail(e)

    solution = analysis.solution
    table = Table(title=f"Poisson solution at level {kernel.n} ({kernel.scheme_tag.value})")
    table.add_column("i", style="cyan", justify="right")
    table.add_column("pi(i)", style="green")
    table.add_column(f"f_{cfg.anchor}(i)", style="green")
    if limit is not None:
        table.add_column("structured f(i)", style="white")
    for i in range(kernel.size):
        cells = [str(i), _num(analysis.invariant.pi[i]), _num(solution.f[i])]
        if limit is not None:
            cells.append(_num(limit[i]))
        table.add_row(*cells)
    console.print(table)
    console.print(f"  pi^T g:   {_num(solution.mean)}")
    console.print(f"  residual: {solution.residual:.3e}")

    if json_path is not None:
        payload = {
            "level": kernel.n,
            "anchor": cfg.anchor,
            "mean": solution.mean,
            "residual": solution.residual,
            "pi": analysis.invariant.pi.tolist(),
            "f": solution.f.tolist(),
        }
        json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        console.print(f"[green]✓[/green] Solution written: {json_path}")


@app.command()
def variance(
    config: Path | None = ConfigOption,
    level: int | None = typer.Option(None, "--level", "-n", min=0, help="Truncation level"),
) -> None:
    """Compute the variance constant at one level by both routes."""
    cfg = _load_config(config, {"level": level})
    try:
        family, spec, g, kernel, analysis = _solve_level(cfg)
        limit = _structured_variance(spec, family, g)
    except Exception as e:
        _fail(e)

    var = analysis.variance
    table = Table(title=f"Variance constant at level {kernel.n}")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("sigma2 (reported)", _num(var.sigma2))
    table.add_row("regenerative route", _num(var.regenerative))
    table.add_row("stationary identity", _num(var.stationary))
    table.add_row("pi^T g", _num(analysis.solution.mean))
    table.add_row(f"E_{cfg.anchor}[return time]", _num(analysis.moments.m1[cfg.anchor]))
    if limit is not None:
        table.add_row("untruncated sigma2", _num(limit))
    console.print(table)


@app.command()
def simulate(
    config: Path | None = ConfigOption,
    level: int | None = typer.Option(None, "--level", "-n", min=0, help="Truncation level"),
    seed: int | None = typer.Option(None, "--seed", min=0, help="Root random seed"),
    replications: int | None = typer.Option(
        None, "--replications", "-r", min=1, help="Number of excursions"
    ),
) -> None:
    """Cross-check return-time moments by Monte Carlo at one level."""
    cfg = _load_config(
        config, {"level": level, "seed": seed, "replications": replications}
    )
    try:
        family, spec, g, kernel, analysis = _solve_level(cfg)
        sim_cfg = cfg.simulation.to_sim_config(cfg.anchor)
        result = simulate_return(kernel, sim_cfg, g)
    except Exception as e:
        _fail(e)

    moments = analysis.moments
    start = sim_cfg.start
    table = Table(title=f"Monte Carlo vs exact at level {kernel.n} (seed {sim_cfg.seed})")
    table.add_column("Quantity", style="cyan")
    table.add_column("Estimate", style="green")
    table.add_column("Std. error", style="white")
    table.add_column("Exact", style="green")
    rows = [
        ("return time", result.tau, moments.m1[start]),
        ("return time^2", result.tau2, moments.m2[start]),
        ("cycle reward", result.zeta, moments.h[start]),
        ("cycle reward^2", result.zeta2, moments.s[start]),
    ]
    if result.sigma2 is not None:
        rows.append(("sigma2", result.sigma2, analysis.variance.sigma2))
    for name, est, exact in rows:
        table.add_row(name, _num(est.value), _num(est.stderr), _num(exact))
    console.print(table)
    console.print(f"  Excursions: {sim_cfg.replications}, steps: {result.steps}")


@app.command()
def families() -> None:
    """List the built-in model families."""
    table = Table(title="Built-in Families")
    table.add_column("Name", style="cyan")
    table.add_column("Description", style="white")
    for name, description in BUILTIN_FAMILIES.items():
        table.add_row(name, description)
    console.print(table)


@app.command()
def init(
    path: Path = typer.Option(
        Path("markov-poisson.yaml"), "--path", "-p", help="Config file path"
    ),
    force: bool = typer.Option(
        False, "--force", "-f", help="Overwrite existing config"
    ),
) -> None:
    """Write an example configuration file."""
    if path.exists() and not force:
        console.print(f"[yellow]Config already exists: {path}[/yellow]")
        console.print("Use --force to overwrite")
        raise typer.Exit()

    try:
        example_config().to_file(path)
    except Exception as e:
        _fail(e)

    console.print(f"[green]✓[/green] Config created: {path}")


def _fail(error: Exception) -> NoReturn:
    """Print an error and exit: 3 for numerical failures, 2 for bad input."""
    err = handle_error(error)
    console.print(f"[red]{format_error(err)}[/red]")
    if err.is_numerical:
        raise typer.Exit(code=EXIT_NUMERICAL)
    if err.error_code is ErrorCode.UNKNOWN_ERROR:
        raise typer.Exit(code=1)
    raise typer.Exit(code=EXIT_CONFIG)


def _load_config(config_path: Path | None, args: dict[str, Any]) -> SweepConfig:
    """Load the run configuration and apply command-line overrides."""
    try:
        if config_path is not None:
            cfg = SweepConfig.from_file(config_path)
        elif (default_path := get_default_config_path()).exists():
            cfg = SweepConfig.from_file(default_path)
        else:
            cfg = SweepConfig()
        return cfg.merge_with_args(args)
    except Exception as e:
        _fail(e)


def _solve_level(
    cfg: SweepConfig,
) -> tuple[FamilyParams, ChainSpec, ForcingFunction, FiniteKernel, FiniteAnalysis]:
    family = cfg.family()
    spec = make_builtin(family)
    g = cfg.g.build(family)
    tol = cfg.tolerances
    kernel = build_kernel(
        spec,
        cfg.scheme,
        cfg.run_level,
        clip_tol=tol.clip,
        censor_tol=tol.censor_stability,
    )
    analysis = analyze(
        kernel,
        g,
        cfg.anchor,
        residual_tol=tol.residual,
        route_tol=tol.route,
        consistency_tol=tol.consistency,
    )
    return family, spec, g, kernel, analysis


def _structured_solution(
    spec: ChainSpec, g: ForcingFunction, anchor: int, size: int
) -> np.ndarray | None:
    """Untruncated f_anchor on {0..size-1} for skip-free chains with a known mean."""
    if g.known_mean is None:
        return None
    if spec.structure is Structure.SINGLE_BIRTH and not spec.is_continuous:
        return single_birth_poisson(spec, g, anchor, g.known_mean, size)
    if spec.structure in (Structure.SINGLE_DEATH, Structure.BIRTH_DEATH) and spec.is_continuous:
        value = single_death_poisson(spec, g, anchor, g.known_mean, size).value
        return np.asarray(value)
    return None


def _structured_variance(
    spec: ChainSpec, family: FamilyParams, g: ForcingFunction
) -> float | None:
    """Untruncated variance constant when a series route applies."""
    if spec.structure is Structure.BIRTH_DEATH:
        return float(birth_death_variance(spec, g).value)
    try:
        golden = example_closed_forms(family)
    except MarkovPoissonError:
        return None
    if isinstance(golden, (Example52Golden, Example53Golden)):
        return float(single_death_variance(spec, g, golden.pi, mean=golden.mean).value)
    return None


def _num(value: float) -> str:
    return "nan" if math.isnan(value) else format(float(value), ".10g")


def _print_sweep(report: SweepReport) -> None:
    """Print sweep rows and the convergence diagnosis."""
    probes = report.config.probes
    table = Table(title="Truncation Sweep")
    table.add_column("n", style="cyan", justify="right")
    table.add_column("pi^T g", style="green")
    for p in probes:
        table.add_column(f"f({p})", style="green")
    table.add_column("sigma2", style="green")
    table.add_column("status", style="white")
    for r in report.rows:
        status = "[green]ok[/green]" if r.ok else f"[red]{r.error_code}[/red]"
        table.add_row(
            str(r.n),
            _num(r.pi_g),
            *(_num(v) for v in r.f_probes),
            _num(r.sigma2),
            status,
        )
    console.print(table)

    console.print("\n[bold]Diagnosis[/bold] [dim](heuristic)[/dim]")
    for name, diagnosis in report.columns.items():
        limit = f" -> {_num(diagnosis.limit)}" if diagnosis.limit is not None else ""
        console.print(f"  {name}: {diagnosis.verdict.value}{limit}  [dim]{diagnosis.detail}[/dim]")
    console.print(f"  Overall: [bold]{report.overall.value}[/bold]")
    if report.failed:
        console.print(f"  Failed levels: [red]{len(report.failed)}[/red]")


if __name__ == "__main__":
    app()
