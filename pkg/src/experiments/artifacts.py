"""
Experiment Artifacts

Writes everything one experiment run produces into its output directory:
- manifest.json: full validated config, config hash, seed, version, threads,
  wall time and the list of files written (enough to re-run exactly)
- summary.json: the deterministic RunSummary (no timings, no thread count)
- <table>.csv: per-replicate / per-level tables from the suite
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console


def _jsonable(value: Any) -> Any:
    """json.dumps fallback for numpy and path values."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def _clean(value: Any) -> Any:
    """Replace non-finite floats by null so the files stay strict JSON."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(float(value)):
        return None
    return value


def dumps(data: Dict[str, Any]) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True, default=_jsonable)


class ArtifactWriter:
    """
    Writes manifest, summary and tables for one run.

    Files land directly in ``out_dir``; the writer remembers what it wrote so
    the manifest can list it.
    """

    def __init__(self, out_dir: Path, console: Optional[Console] = None):
        self.out_dir = Path(out_dir)
        self.console = console
        self.files: List[str] = []

    def _log(self, message: str) -> None:
        if self.console is not None:
            self.console.print(f"[dim][Artifacts] {message}[/dim]")

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        if name not in self.files:
            self.files.append(name)
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = self._target(name)
        path.write_text(dumps(data) + "\n")
        self._log(f"Saved {path}")
        return path

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(f"{name}.csv")
        frame.to_csv(path, index=False, float_format="%.17g")
        self._log(f"Saved {path} ({len(frame)} rows)")
        return path

    def write_tables(self, tables: Dict[str, pd.DataFrame]) -> List[Path]:
        return [self.write_table(name, frame) for name, frame in sorted(tables.items())]

    def write_summary(self, summary: Dict[str, Any]) -> Path:
        return self.write_json("summary.json", summary)

    def write_manifest(
        self,
        config: Dict[str, Any],
        config_hash: str,
        seed: int,
        version: str,
        threads: int,
        wall_time_s: float,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        manifest: Dict[str, Any] = {
            "config": config,
            "config_hash": config_hash,
            "seed": seed,
            "version": version,
            "threads": threads,
            "wall_time_s": round(wall_time_s, 3),
            "files": sorted(set(self.files) | {"manifest.json"}),
        }
        if extra:
            manifest.update(extra)
        return self.write_json("manifest.json", manifest)
