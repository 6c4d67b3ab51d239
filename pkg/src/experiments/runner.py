"""
Experiment Runner

run_experiment(config) resolves the suite, builds its context, runs it,
writes artifacts and raises AcceptanceFailure if any check failed (after the
artifacts are on disk, so failures can be inspected).

The summary is a pure function of (config, seed): wall time, thread count
and version live in the manifest only.
"""
import subprocess
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.table import Table

from src.experiments.artifacts import ArtifactWriter
from src.experiments.config import ExperimentConfig
from src.experiments.registry import get_registry
from src.experiments.suites import SUITE_FUNCTIONS, Check, SuiteContext, SuiteResult
from src.utils.errors import AcceptanceFailure
from src.utils.settings import get_settings

PACKAGE_NAME = "strmlab"


def version_string() -> str:
    """`git describe` when run from a checkout, else the installed package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        if out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunSummary:
    experiment: str
    seed: int
    config_hash: str
    replicates: int
    records: List[Dict[str, Any]] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    version: str = "unknown"
    output_dir: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        """Deterministic part only."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "replicates": self.replicates,
            "passed": self.passed,
            "records": self.records,
            "checks": [c.to_dict() for c in self.checks],
            "warnings": list(self.warnings),
        }

    def print_report(self, console: Optional[Console] = None):
        console = console or Console()
        table = Table(title=f"{self.experiment} (seed {self.seed}, {self.replicates} replicates)")
        table.add_column("Check", style="cyan")
        table.add_column("Result", justify="center")
        for check in self.checks:
            table.add_row(check.name, "[green]PASS[/green]" if check.passed else "[red]FAIL[/red]")
        if self.checks:
            console.print(table)
        else:
            console.print(f"[dim]{self.experiment}: no checks ran[/dim]")
        for warning in self.warnings:
            console.print(f"[yellow]⚠ {warning}[/yellow]")
        console.print(f"[dim]wall time {self.wall_time_s:.1f}s, version {self.version}, config {self.config_hash[:12]}[/dim]")


def run_experiment(config: ExperimentConfig, console: Optional[Console] = None) -> RunSummary:
    """Run one experiment suite end to end and write its artifacts."""
    settings = get_settings()
    suite = get_registry().resolve(config.experiment)
    threads = config.threads or settings.threads
    out_dir = Path(config.output_dir) if config.output_dir else settings.output_dir / suite.id
    summary = RunSummary(suite.id, config.seed, config.config_hash(), config.replicates, version=version_string(), output_dir=out_dir)

    started = time.perf_counter()
    result = SuiteResult()
    if config.replicates > 0:
        if console is not None:
            console.print(f"[bold][Runner][/bold] {suite.id}: {config.replicates} replicates on {threads} thread(s)")
        ctx = SuiteContext(config, suite.id, threads=threads, cap=config.population_cap, console=console)
        result = SUITE_FUNCTIONS[suite.function_name](ctx)
    elif console is not None:
        console.print(f"[bold][Runner][/bold] {suite.id}: replicates=0, nothing to run")
    summary.wall_time_s = time.perf_counter() - started
    summary.records = result.records
    summary.checks = result.checks
    summary.warnings = result.warnings

    writer = ArtifactWriter(out_dir, console)
    writer.write_tables(result.tables)
    writer.write_summary(summary.to_dict())
    writer.write_manifest(
        config=config.model_dump(mode="json"),
        config_hash=summary.config_hash,
        seed=config.seed,
        version=summary.version,
        threads=threads,
        wall_time_s=summary.wall_time_s,
        extra={"suite": suite.to_dict(), "population_cap": config.population_cap or settings.population_cap},
    )

    failed = result.failed_checks()
    if failed:
        error = AcceptanceFailure(
            f"{len(failed)} of {len(result.checks)} acceptance checks failed for '{suite.id}'",
            {"failed": [c.name for c in failed], "output_dir": str(out_dir)},
        )
        error.summary = summary
        raise error
    return summary
