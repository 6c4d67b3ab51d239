"""
Error hierarchy for strmlab.

Every failure the CLI can report maps to one exception class carrying the
process exit code it should produce:

- 2: configuration / domain problems (bad law, bad arguments, wrong regime)
- 3: resource caps (population or candidate growth above the configured cap)
- 4: acceptance failures and pathwise invariant violations
"""
from typing import Any, Dict, Optional


class StrmLabError(Exception):
    """Base exception; carries an exit code plus structured details."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "exit_code": self.exit_code,
            "message": self.message,
            "details": self.details,
        }


class ConfigError(StrmLabError):
    """Invalid configuration or violated precondition."""
    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain of an operation."""


class InvalidLawError(ConfigError):
    """Offspring or displacement law that cannot be constructed."""


class RegimeError(ConfigError):
    """Operation needs a regime (e.g. supercritical offspring) the law is not in."""


class ResourceLimitError(StrmLabError):
    """Population cap exceeded."""
    exit_code = 3

    def __init__(self, what: str, size: int, cap: int):
        super().__init__(
            f"{what} reached {size:,} which exceeds the population cap of {cap:,}",
            {"what": what, "size": size, "cap": cap},
        )
        self.size = size
        self.cap = cap


class AcceptanceFailure(StrmLabError):
    """One or more acceptance checks of an experiment failed."""
    exit_code = 4
    # the RunSummary of the failed run, attached by the runner
    summary: Any = None


class InvariantViolation(StrmLabError):
    """A pathwise invariant (containment, neighbour soundness) was broken."""
    exit_code = 4
