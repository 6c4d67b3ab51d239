"""
Offspring and Displacement Laws

The single source of randomness semantics for every simulator:
- OffspringLaw: Poisson, geometric (support k >= 1), binomial, deterministic
  and finite-table laws with exact pgf, stable complement pgf, truncated pmf
  tables, size-biasing and Bernoulli thinning
- DisplacementLaw: uniform B-adic digits, k distinct sites, or the dependent
  Gaussian sibling law realised in ``sbm_bridge``
- ModelParams: (d, B, offspring) plus the derived beta, c, rho and regime

Law objects are immutable and safe to share between threads.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy import stats

from src.tools.lattice import digit_table
from src.utils.errors import ConfigError, DomainError, InvalidLawError, RegimeError
from src.utils.normalizer import normalize_law_kind
from src.utils.rng import Stream, as_generator

ArrayLike = Union[float, np.ndarray]

MAX_TABLE_SIZE = 10**4
TABLE_TOLERANCE = 1e-12
TAIL_MASS = 1e-17


class OffspringKind(str, Enum):
    POISSON = "poisson"
    GEOMETRIC = "geometric"
    BINOMIAL = "binomial"
    DETERMINISTIC = "deterministic"
    TABLE = "table"


class DisplacementKind(str, Enum):
    UNIFORM_DIGITS = "uniform_digits"
    GAUSSIAN_SIBLING = "gaussian_sibling"
    DISTINCT_SITES = "distinct_sites"


class ModelMode(str, Enum):
    GRID = "grid"
    FREE = "free"


class Regime(str, Enum):
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"
    SUPERCRITICAL_SPATIAL = "supercritical_spatial"


def _check_unit(s: ArrayLike, name: str = "s") -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {s}")
    return arr


def _as_output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class ThinnedMoments:
    """Moments of R = Bernoulli(p)-thinned Z."""
    p: float
    mean: float
    variance: float
    # mu*p*(1-p): the value obtained when the p^2 Var(Z) term is dropped
    binomial_part: float

    def to_dict(self) -> Dict[str, float]:
        return {"p": self.p, "mean": self.mean, "variance": self.variance, "binomial_part": self.binomial_part}


@dataclass(frozen=True)
class OffspringLaw:
    """
    Law of the offspring count Z.

    Build with the classmethods rather than the raw constructor:
        OffspringLaw.poisson(4.0)
        OffspringLaw.geometric(2.0)       # P(Z=k) = (1/mu)(1-1/mu)^(k-1), k >= 1
        OffspringLaw.binomial(4, 0.5)
        OffspringLaw.deterministic(2)
        OffspringLaw.finite_table([0.25, 0.5, 0.25])
    """
    kind: OffspringKind
    rate: float = 0.0
    n: int = 0
    p: float = 0.0
    k: int = 0
    probs: Tuple[float, ...] = field(default=())

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def poisson(cls, mean: float) -> "OffspringLaw":
        mean = float(mean)
        if not math.isfinite(mean) or mean < 0:
            raise InvalidLawError(f"Poisson mean must be finite and >= 0, got {mean}")
        return cls(OffspringKind.POISSON, rate=mean)

    @classmethod
    def geometric(cls, mean: float) -> "OffspringLaw":
        mean = float(mean)
        if not math.isfinite(mean) or mean < 1:
            raise InvalidLawError(f"Geometric mean must be >= 1 (support starts at 1), got {mean}")
        return cls(OffspringKind.GEOMETRIC, rate=mean)

    @classmethod
    def binomial(cls, n: int, p: float) -> "OffspringLaw":
        if int(n) != n or n < 0:
            raise InvalidLawError(f"Binomial n must be a non-negative integer, got {n}")
        if not 0.0 <= float(p) <= 1.0:
            raise InvalidLawError(f"Binomial p must lie in [0, 1], got {p}")
        return cls(OffspringKind.BINOMIAL, n=int(n), p=float(p))

    @classmethod
    def deterministic(cls, k: int) -> "OffspringLaw":
        if int(k) != k or k < 0:
            raise InvalidLawError(f"Deterministic k must be a non-negative integer, got {k}")
        return cls(OffspringKind.DETERMINISTIC, k=int(k))

    @classmethod
    def finite_table(cls, probs) -> "OffspringLaw":
        arr = np.asarray(list(probs), dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidLawError("Finite table needs at least one probability")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidLawError(f"Finite table probabilities must be finite and >= 0: {arr.tolist()}")
        total = math.fsum(arr.tolist())
        if abs(total - 1.0) > TABLE_TOLERANCE:
            raise InvalidLawError(f"Finite table probabilities sum to {total!r}, not 1 within {TABLE_TOLERANCE}")
        if arr.size > MAX_TABLE_SIZE + 1:
            arr = arr[: MAX_TABLE_SIZE + 1]
            kept = math.fsum(arr.tolist())
            if kept <= 0:
                raise InvalidLawError("Finite table has no mass below the truncation point")
            arr = arr / kept
        last = int(np.flatnonzero(arr)[-1]) if np.any(arr > 0) else 0
        return cls(OffspringKind.TABLE, probs=tuple(float(x) for x in arr[: last + 1]))

    @classmethod
    def from_spec(cls, spec: Dict[str, Any]) -> "OffspringLaw":
        """Build from the JSON grammar, e.g. ``{"kind": "poisson", "mean": 4}``."""
        if not isinstance(spec, dict) or "kind" not in spec:
            raise InvalidLawError(f"Law spec needs a 'kind' field: {spec!r}")
        kind = normalize_law_kind(str(spec["kind"]))
        try:
            if kind == "poisson":
                return cls.poisson(spec["mean"])
            if kind == "geometric":
                return cls.geometric(spec["mean"])
            if kind == "binomial":
                return cls.binomial(spec["n"], spec["p"])
            if kind == "deterministic":
                return cls.deterministic(spec["k"])
            if kind == "table":
                return cls.finite_table(spec["probs"])
        except KeyError as e:
            raise InvalidLawError(f"Law spec {spec!r} is missing field {e}") from e
        raise InvalidLawError(f"Unknown law kind '{spec['kind']}'")

    def to_spec(self) -> Dict[str, Any]:
        if self.kind in (OffspringKind.POISSON, OffspringKind.GEOMETRIC):
            return {"kind": self.kind.value, "mean": self.rate}
        if self.kind == OffspringKind.BINOMIAL:
            return {"kind": "binomial", "n": self.n, "p": self.p}
        if self.kind == OffspringKind.DETERMINISTIC:
            return {"kind": "deterministic", "k": self.k}
        return {"kind": "table", "probs": list(self.probs)}

    def describe(self) -> str:
        if self.kind == OffspringKind.POISSON:
            return f"Poisson({self.rate:g})"
        if self.kind == OffspringKind.GEOMETRIC:
            return f"Geometric(mean={self.rate:g})"
        if self.kind == OffspringKind.BINOMIAL:
            return f"Binomial({self.n}, {self.p:g})"
        if self.kind == OffspringKind.DETERMINISTIC:
            return f"Deterministic({self.k})"
        return f"FiniteTable(K={len(self.probs) - 1})"

    # ------------------------------------------------------------------
    # Moments
    # ------------------------------------------------------------------

    @property
    def mean(self) -> float:
        if self.kind in (OffspringKind.POISSON, OffspringKind.GEOMETRIC):
            return self.rate
        if self.kind == OffspringKind.BINOMIAL:
            return self.n * self.p
        if self.kind == OffspringKind.DETERMINISTIC:
            return float(self.k)
        return math.fsum(k * q for k, q in enumerate(self.probs))

    @property
    def variance(self) -> float:
        if self.kind == OffspringKind.POISSON:
            return self.rate
        if self.kind == OffspringKind.GEOMETRIC:
            return self.rate * (self.rate - 1.0)
        if self.kind == OffspringKind.BINOMIAL:
            return self.n * self.p * (1.0 - self.p)
        if self.kind == OffspringKind.DETERMINISTIC:
            return 0.0
        m = self.mean
        return math.fsum((k - m) ** 2 * q for k, q in enumerate(self.probs))

    @property
    def p0(self) -> float:
        return float(self.pgf(0.0))

    # ------------------------------------------------------------------
    # Generating functions
    # ------------------------------------------------------------------

    def pgf(self, s: ArrayLike) -> ArrayLike:
        """E[s^Z] for s in [0, 1] (scalar or array)."""
        x = _check_unit(s)
        if self.kind == OffspringKind.POISSON:
            out = np.exp(self.rate * (x - 1.0))
        elif self.kind == OffspringKind.GEOMETRIC:
            a = 1.0 / self.rate
            out = a * x / (1.0 - (1.0 - a) * x)
        elif self.kind == OffspringKind.BINOMIAL:
            out = (1.0 - self.p + self.p * x) ** self.n
        elif self.kind == OffspringKind.DETERMINISTIC:
            out = x**self.k
        else:
            # Horner over p_K..p_0
            out = np.polyval(np.asarray(self.probs[::-1]), x)
        return _as_output(out, s)

    def complement_pgf(self, u: float) -> float:
        """1 - pgf(1 - u), evaluated without cancellation for small u."""
        u = float(_check_unit(u, "u"))
        if u == 0.0:
            return 0.0
        if self.kind == OffspringKind.POISSON:
            return -math.expm1(-self.rate * u)
        if self.kind == OffspringKind.GEOMETRIC:
            a = 1.0 / self.rate
            return u / (a + (1.0 - a) * u)
        if u == 1.0:
            return 1.0 - self.p0
        if self.kind == OffspringKind.BINOMIAL:
            return -math.expm1(self.n * math.log1p(-self.p * u))
        if self.kind == OffspringKind.DETERMINISTIC:
            return -math.expm1(self.k * math.log1p(-u)) if self.k else 0.0
        log_rest = math.log1p(-u)
        return math.fsum(q * -math.expm1(k * log_rest) for k, q in enumerate(self.probs) if k and q)

    def thinned_pgf(self, p: float, s: ArrayLike) -> ArrayLike:
        """E[s^R] where R keeps each child independently with probability p."""
        if not 0.0 < p <= 1.0:
            raise DomainError(f"thinning probability must lie in (0, 1], got {p}")
        x = _check_unit(s)
        return _as_output(np.asarray(self.pgf(np.clip(1.0 - p + p * x, 0.0, 1.0))), s)

    def thinned_moments(self, p: float) -> ThinnedMoments:
        if not 0.0 < p <= 1.0:
            raise DomainError(f"thinning probability must lie in (0, 1], got {p}")
        mu = self.mean
        return ThinnedMoments(
            p=p,
            mean=mu * p,
            variance=p * (1.0 - p) * mu + p * p * self.variance,
            binomial_part=mu * p * (1.0 - p),
        )

    # ------------------------------------------------------------------
    # Tables and size-biasing
    # ------------------------------------------------------------------

    def support_bound(self) -> int:
        """Largest k kept in pmf tables (mass beyond it below 1e-17, capped)."""
        if self.kind == OffspringKind.POISSON:
            bound = 0
            if self.rate > 0:
                tail = float(stats.poisson.isf(TAIL_MASS, self.rate))
                if not math.isfinite(tail):
                    tail = self.rate + 12.0 * math.sqrt(self.rate) + 30.0
                bound = int(tail) + 1
        elif self.kind == OffspringKind.GEOMETRIC:
            a = 1.0 / self.rate
            bound = 1 if a >= 1.0 else int(math.ceil(math.log(TAIL_MASS) / math.log1p(-a))) + 1
        elif self.kind == OffspringKind.BINOMIAL:
            bound = self.n
        elif self.kind == OffspringKind.DETERMINISTIC:
            bound = self.k
        else:
            bound = len(self.probs) - 1
        return min(bound, MAX_TABLE_SIZE)

    def pmf_table(self, K: Optional[int] = None) -> np.ndarray:
        """P(Z = k) for k = 0..K."""
        K = self.support_bound() if K is None else int(K)
        if K < 0:
            raise DomainError(f"table size must be >= 0, got {K}")
        ks = np.arange(K + 1)
        if self.kind == OffspringKind.POISSON:
            return stats.poisson.pmf(ks, self.rate) if self.rate > 0 else (ks == 0).astype(float)
        if self.kind == OffspringKind.GEOMETRIC:
            return stats.geom.pmf(ks, 1.0 / self.rate)
        if self.kind == OffspringKind.BINOMIAL:
            return stats.binom.pmf(ks, self.n, self.p)
        if self.kind == OffspringKind.DETERMINISTIC:
            return (ks == self.k).astype(float)
        out = np.zeros(K + 1)
        m = min(K + 1, len(self.probs))
        out[:m] = self.probs[:m]
        return out

    def size_biased(self) -> "OffspringLaw":
        """Law of Z* with P(Z* = k) = k p_k / mu."""
        if self.mean <= 0:
            raise InvalidLawError(f"{self.describe()} has mean 0 and cannot be size-biased")
        if self.kind == OffspringKind.DETERMINISTIC:
            return self
        table = self.pmf_table()
        weighted = np.arange(table.size) * table
        total = math.fsum(weighted.tolist())
        if total <= 0:
            raise InvalidLawError(f"{self.describe()} has no mass on k >= 1 below the table bound")
        return OffspringLaw.finite_table(weighted / total)

    @cached_property
    def _cdf(self) -> np.ndarray:
        cdf = np.cumsum(np.asarray(self.probs))
        cdf[-1] = 1.0
        return cdf

    # ------------------------------------------------------------------
    # Sampling
    # ------------------------------------------------------------------

    def sample(self, gen: np.random.Generator, size=None):
        """Draw offspring counts (int or int64 array)."""
        if self.kind == OffspringKind.POISSON:
            out = gen.poisson(self.rate, size)
        elif self.kind == OffspringKind.GEOMETRIC:
            out = gen.geometric(1.0 / self.rate, size)
        elif self.kind == OffspringKind.BINOMIAL:
            out = gen.binomial(self.n, self.p, size)
        elif self.kind == OffspringKind.DETERMINISTIC:
            out = self.k if size is None else np.full(size, self.k, dtype=np.int64)
        else:
            u = gen.random(size)
            out = np.minimum(np.searchsorted(self._cdf, u, side="right"), len(self.probs) - 1)
        if size is None:
            return int(out)
        return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Displacement laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisplacementLaw:
    """How siblings are placed relative to their parent."""
    kind: DisplacementKind = DisplacementKind.UNIFORM_DIGITS

    @property
    def is_grid(self) -> bool:
        return self.kind != DisplacementKind.GAUSSIAN_SIBLING

    def satisfies_tail_condition(self, zeta: float) -> bool:
        """P(|X| > r) <= C r^(-zeta): bounded kinds and the Gaussian kind pass for every zeta > 0."""
        if zeta <= 0:
            raise DomainError(f"tail exponent must be > 0, got {zeta}")
        if self.kind in (DisplacementKind.UNIFORM_DIGITS, DisplacementKind.DISTINCT_SITES):
            # one level moves a child at most sqrt(d) / B from its parent
            return True
        if self.kind == DisplacementKind.GAUSSIAN_SIBLING:
            # Gaussian tails decay faster than any power
            return True
        raise DomainError(f"no tail bound known for displacement kind {self.kind.value}")

    def sample_sibling_digits(self, k: int, d: int, B: int, gen: np.random.Generator) -> np.ndarray:
        """Digit vectors of k siblings, shape (k, d)."""
        return self.sample_children_digits(np.array([k], dtype=np.int64), d, B, gen)

    def sample_children_digits(self, z: np.ndarray, d: int, B: int, gen: np.random.Generator) -> np.ndarray:
        """
        Digits for all children of a batch of parents, parent by parent.

        ``z[i]`` is the number of children of parent i; the result has
        ``z.sum()`` rows ordered by parent.
        """
        total = int(z.sum())
        if self.kind == DisplacementKind.UNIFORM_DIGITS:
            return gen.integers(0, B, size=(total, d), dtype=np.int64)
        if self.kind == DisplacementKind.DISTINCT_SITES:
            sites = B**d
            if z.size and int(z.max()) > sites:
                raise DomainError(f"distinct-site placement needs at most {sites} children, got {int(z.max())}")
            parents = np.flatnonzero(z)
            if parents.size == 0:
                return np.zeros((0, d), dtype=np.int64)
            order = np.argsort(gen.random((parents.size, sites)), axis=1)
            mask = np.arange(sites)[None, :] < z[parents][:, None]
            return digit_table(B, d)[order[mask]]
        raise DomainError("Gaussian sibling displacements are continuous; use sbm_bridge.sample_qk")


UNIFORM_DIGITS = DisplacementLaw(DisplacementKind.UNIFORM_DIGITS)


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """(d, B, offspring) together with the derived beta, c and rho."""
    d: int
    B: int
    offspring: OffspringLaw
    displacement: DisplacementLaw = UNIFORM_DIGITS
    mode: ModelMode = ModelMode.GRID

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"dimension d must be an integer >= 1, got {self.d}")
        if int(self.B) != self.B or self.B < 2:
            raise ConfigError(f"base B must be an integer >= 2, got {self.B}")
        if self.mode == ModelMode.GRID and not self.displacement.is_grid:
            raise ConfigError("grid mode needs a digit displacement law")

    @classmethod
    def from_c(cls, B: int, d: int, c: float) -> "ModelParams":
        """Poisson(c B^d) offspring."""
        if c <= 0:
            raise ConfigError(f"c must be > 0, got {c}")
        return cls(d=d, B=B, offspring=OffspringLaw.poisson(c * B**d))

    @classmethod
    def from_beta(cls, B: int, d: int, beta: float) -> "ModelParams":
        """Poisson(B^(2/beta)) offspring."""
        if beta <= 0:
            raise ConfigError(f"beta must be > 0, got {beta}")
        return cls(d=d, B=B, offspring=OffspringLaw.poisson(B ** (2.0 / beta)))

    @property
    def mu(self) -> float:
        return self.offspring.mean

    @property
    def sites(self) -> int:
        return self.B**self.d

    @property
    def p(self) -> float:
        """Thinning probability B^-d of a single child cell."""
        return float(self.B) ** (-self.d)

    @property
    def beta(self) -> float:
        if self.mu <= 1:
            raise RegimeError(f"beta needs mean offspring > 1, got {self.mu}")
        return 2.0 * math.log(self.B) / math.log(self.mu)

    @property
    def c(self) -> float:
        return self.mu * self.p

    @property
    def thinned_mean(self) -> float:
        return self.c

    @property
    def rho(self) -> float:
        if self.mode == ModelMode.GRID:
            return 1.0 / self.B
        return self.mu ** (-self.beta / 2.0)

    @property
    def regime(self) -> Regime:
        if math.isclose(self.mu, self.sites, rel_tol=1e-12):
            return Regime.CRITICAL
        return Regime.SUBCRITICAL if self.mu < self.sites else Regime.SUPERCRITICAL_SPATIAL

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "d": self.d,
            "B": self.B,
            "offspring": self.offspring.to_spec(),
            "displacement": self.displacement.kind.value,
            "mode": self.mode.value,
            "mu": self.mu,
            "c": self.c,
            "regime": self.regime.value,
        }
        if self.mu > 1:
            out["beta"] = self.beta
        return out


# ---------------------------------------------------------------------------
# Functional forms
# ---------------------------------------------------------------------------

def pgf(law: OffspringLaw, s: ArrayLike) -> ArrayLike:
    return law.pgf(s)


def thinned_pgf(law: OffspringLaw, p: float, s: ArrayLike) -> ArrayLike:
    return law.thinned_pgf(p, s)


def size_biased(law: OffspringLaw) -> OffspringLaw:
    return law.size_biased()


def sample(law: OffspringLaw, stream: Union[Stream, np.random.Generator], size=None):
    """Offspring draws from a substream handle (or generator)."""
    return law.sample(as_generator(stream), size)


def sample_digits(d: int, B: int, stream: Union[Stream, np.random.Generator], size=None) -> np.ndarray:
    """Uniform element(s) of {0, ..., B-1}^d."""
    if d < 1 or B < 2:
        raise DomainError(f"need d >= 1 and B >= 2, got d={d}, B={B}")
    gen = as_generator(stream)
    shape = (d,) if size is None else (size, d)
    return gen.integers(0, B, size=shape, dtype=np.int64)
