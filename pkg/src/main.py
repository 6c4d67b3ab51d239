"""
strmlab command line.

    strmlab <experiment> [--config file.json] [--seed N] [--replicates N]
                         [--out DIR] [--threads N] [--adjacency MODE]
    strmlab run <name>   (aliases and partial names accepted)
    strmlab list
    strmlab describe <experiment>

Exit codes: 0 ok, 2 config error, 3 resource cap, 4 acceptance failure.
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional

import typer
from rich.panel import Panel
from rich.table import Table

from src.experiments.config import build_config, read_config_file
from src.experiments.registry import Suite, get_registry
from src.experiments.runner import run_experiment
from src.utils.errors import AcceptanceFailure, StrmLabError
from src.utils.settings import get_console

app = typer.Typer(help="Super-tree random measure laboratory: simulators, oracles and acceptance suites.")
console = get_console()

ConfigOpt = typer.Option(None, "--config", "-c", help="JSON config file (a manifest.json also works)")
SeedOpt = typer.Option(None, "--seed", "-s", help="Root seed (u64)")
ReplicatesOpt = typer.Option(None, "--replicates", "-n", help="Number of replicates")
OutOpt = typer.Option(None, "--out", "-o", help="Output directory")
ThreadsOpt = typer.Option(None, "--threads", "-t", help="Worker threads (default STRMLAB_THREADS)")
AdjacencyOpt = typer.Option(None, "--adjacency", "-a", help="face | paperl | closedcube")


def _file_values(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    data = read_config_file(path)
    # re-running from a manifest
    if isinstance(data.get("config"), dict):
        data = data["config"]
    return {k: v for k, v in data.items() if k != "experiment"}


def _execute(
    suite: Suite,
    config_file: Optional[Path],
    seed: Optional[int],
    replicates: Optional[int],
    out: Optional[Path],
    threads: Optional[int],
    adjacency: Optional[str],
) -> None:
    try:
        config = build_config(
            suite.id,
            defaults=suite.defaults,
            file_values=_file_values(config_file),
            overrides={
                "seed": seed,
                "replicates": replicates,
                "output_dir": out,
                "threads": threads,
                "adjacency": adjacency,
            },
        )
        console.print(Panel.fit(
            f"[bold green]{suite.name}[/bold green]\n{suite.description}\n"
            f"[dim]seed {config.seed} · config {config.config_hash()[:12]}[/dim]",
            style="bold blue",
        ))
        summary = run_experiment(config, console)
        summary.print_report(console)
        console.print(f"[bold green]✓ all checks passed[/bold green] → {summary.output_dir}")
    except AcceptanceFailure as e:
        if e.summary is not None:
            e.summary.print_report(console)
        console.print(f"[bold red]✗ {e.message}[/bold red]")
        raise typer.Exit(code=e.exit_code)
    except StrmLabError as e:
        console.print(f"[bold red]Error ({type(e).__name__}):[/bold red] {e.message}")
        raise typer.Exit(code=e.exit_code)


def _register(suite: Suite) -> None:
    def command(
        config: Optional[Path] = ConfigOpt,
        seed: Optional[int] = SeedOpt,
        replicates: Optional[int] = ReplicatesOpt,
        out: Optional[Path] = OutOpt,
        threads: Optional[int] = ThreadsOpt,
        adjacency: Optional[str] = AdjacencyOpt,
    ):
        _execute(suite, config, seed, replicates, out, threads, adjacency)

    command.__doc__ = suite.description
    app.command(name=suite.id, help=suite.description)(command)


for _suite in get_registry().get_all_suites():
    _register(_suite)


@app.command(name="run")
def run_named(
    experiment: str = typer.Argument(..., help="Experiment name; aliases and partial names are resolved"),
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    replicates: Optional[int] = ReplicatesOpt,
    out: Optional[Path] = OutOpt,
    threads: Optional[int] = ThreadsOpt,
    adjacency: Optional[str] = AdjacencyOpt,
):
    """Run an experiment by (possibly abbreviated) name."""
    try:
        suite = get_registry().resolve(experiment)
    except StrmLabError as e:
        console.print(f"[bold red]Error:[/bold red] {e.message}")
        raise typer.Exit(code=e.exit_code)
    _execute(suite, config, seed, replicates, out, threads, adjacency)


@app.command(name="list")
def list_suites():
    """List the experiment suites."""
    table = Table(title="strmlab experiments")
    table.add_column("Experiment", style="cyan")
    table.add_column("Category", style="magenta")
    table.add_column("Description")
    for suite in get_registry().get_all_suites():
        table.add_row(suite.id, suite.category.value, suite.description)
    console.print(table)


@app.command()
def describe(experiment: str = typer.Argument(..., help="Experiment name")):
    """Show an experiment's description and default configuration."""
    try:
        suite = get_registry().resolve(experiment)
    except StrmLabError as e:
        console.print(f"[bold red]Error:[/bold red] {e.message}")
        raise typer.Exit(code=e.exit_code)
    console.print(Panel.fit(f"[bold green]{suite.name}[/bold green] ({suite.id})\n{suite.description}", style="bold blue"))
    typer.echo(json.dumps(suite.defaults, indent=2))


if __name__ == "__main__":
    app()
