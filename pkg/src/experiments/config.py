"""
Experiment configuration.

Values are layered: suite defaults < JSON config file < command-line flags.
The merged dict is validated once by pydantic before anything runs, and its
canonical JSON dump (minus threads and output directory, which never change
results) is hashed into every artifact.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.tools.laws import ModelParams, OffspringLaw
from src.utils.errors import ConfigError, StrmLabError
from src.utils.normalizer import normalize_adjacency, normalize_law_kind

DEFAULT_SEED = 20240611
HASH_EXCLUDED = {"threads", "output_dir"}


class LawSpec(BaseModel):
    """JSON law grammar: {"kind": "poisson", "mean": 4} and friends."""
    model_config = ConfigDict(extra="forbid")

    kind: str
    mean: Optional[float] = None
    n: Optional[int] = None
    p: Optional[float] = None
    k: Optional[int] = None
    probs: Optional[List[float]] = None

    @field_validator("kind")
    @classmethod
    def _canonical_kind(cls, v: str) -> str:
        kind = normalize_law_kind(v)
        if kind is None:
            raise ValueError(f"unknown law kind '{v}'")
        return kind

    @model_validator(mode="after")
    def _buildable(self) -> "LawSpec":
        # surfaces InvalidLawError messages as validation errors
        try:
            self.to_law()
        except StrmLabError as e:
            raise ValueError(e.message) from e
        return self

    def to_law(self) -> OffspringLaw:
        return OffspringLaw.from_spec(self.model_dump(exclude_none=True))


class CaseSpec(BaseModel):
    """One parameter case of a multi-case suite; unset fields inherit from the config."""
    model_config = ConfigDict(extra="forbid")

    label: str
    B: Optional[int] = Field(default=None, ge=2)
    d: Optional[int] = Field(default=None, ge=1)
    offspring: Optional[LawSpec] = None
    levels: Optional[int] = Field(default=None, ge=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: str
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    replicates: int = Field(default=100, ge=0)
    B: int = Field(default=2, ge=2)
    d: int = Field(default=2, ge=1)
    offspring: LawSpec = Field(default_factory=lambda: LawSpec(kind="poisson", mean=4.0))
    levels: int = Field(default=8, ge=0)
    adjacency: str = "paper_l"
    axis: int = Field(default=0, ge=0)
    sweep_axis: Optional[Literal["p", "c", "mu", "beta"]] = None
    sweep: List[float] = Field(default_factory=list)
    cases: List[CaseSpec] = Field(default_factory=list)
    population_cap: Optional[int] = Field(default=None, gt=0)
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[Path] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("adjacency")
    @classmethod
    def _canonical_adjacency(cls, v: str) -> str:
        mode = normalize_adjacency(v)
        if mode is None:
            raise ValueError(f"unknown adjacency mode '{v}' (face, paper_l, closed_cube)")
        return mode

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.axis >= self.d:
            raise ValueError(f"axis {self.axis} is out of range for d={self.d}")
        if self.sweep and self.sweep_axis is None:
            raise ValueError("sweep values given without a sweep_axis")
        labels = [c.label for c in self.cases]
        if len(labels) != len(set(labels)):
            raise ValueError("case labels must be unique")
        return self

    # ------------------------------------------------------------------

    def law(self) -> OffspringLaw:
        return self.offspring.to_law()

    def params(self) -> ModelParams:
        return ModelParams(d=self.d, B=self.B, offspring=self.law())

    def case_params(self, case: CaseSpec) -> ModelParams:
        law = case.offspring.to_law() if case.offspring is not None else self.law()
        return ModelParams(d=case.d or self.d, B=case.B or self.B, offspring=law)

    def case_levels(self, case: CaseSpec) -> int:
        return self.levels if case.levels is None else case.levels

    def option(self, name: str, default: Any = None) -> Any:
        return self.options.get(name, default)

    def hashable_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude=HASH_EXCLUDED)

    def config_hash(self) -> str:
        canonical = json.dumps(self.hashable_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in update.items():
        if key == "options" and isinstance(value, dict):
            out["options"] = {**out.get("options", {}), **value}
        else:
            out[key] = value
    return out


def build_config(
    experiment: str,
    defaults: Optional[Dict[str, Any]] = None,
    file_values: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """Layer defaults < file < flags (None flags are ignored) and validate."""
    merged = _merge(defaults or {}, file_values or {})
    merged = _merge(merged, {k: v for k, v in (overrides or {}).items() if v is not None})
    merged["experiment"] = experiment
    try:
        config = ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration for '{experiment}': {problems}") from e
    # model-level preconditions (d, B, law) raise ConfigError subclasses here
    config.params()
    for case in config.cases:
        config.case_params(case)
    return config
