"""
Runtime settings read from the environment.

Environment variables (a local ``.env`` file is honoured):
- STRMLAB_THREADS: default worker threads for replicate fan-out (default 1)
- STRMLAB_POPULATION_CAP: particle-cell pairs allowed per state (default 1e8)
- STRMLAB_OUTPUT_DIR: where experiment artifacts go (default ./output)
- STRMLAB_QUIET: "true" silences console progress lines
"""
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from rich.console import Console

load_dotenv()

DEFAULT_POPULATION_CAP = 10**8


@dataclass(frozen=True)
class Settings:
    threads: int
    population_cap: int
    output_dir: Path
    quiet: bool

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            threads=max(1, int(os.getenv("STRMLAB_THREADS", "1"))),
            population_cap=int(float(os.getenv("STRMLAB_POPULATION_CAP", str(DEFAULT_POPULATION_CAP)))),
            output_dir=Path(os.getenv("STRMLAB_OUTPUT_DIR", "./output")),
            quiet=os.getenv("STRMLAB_QUIET", "false").lower() == "true",
        )


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get the process-wide settings (read once)."""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def reset_settings() -> None:
    """Forget cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None


def get_console() -> Console:
    """Stderr console honouring STRMLAB_QUIET."""
    return Console(stderr=True, quiet=get_settings().quiet)
