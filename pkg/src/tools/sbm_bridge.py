"""
SBM Bridge

Free-space STRM whose limit is super-Brownian motion:
- geometric offspring with mean mu (support k >= 1, never extinct)
- sibling displacements Q_k from a branching Brownian tree run to time
  1 - 1/mu, scaled by sqrt(mu) so each marginal is N(0, (mu - 1) I)
- generation n displaced by rho^n with rho = mu^(-1/2), weights mu^(-n)

Validators cover the branch-time law and the offspring law.
"""
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.analysis.statistics import FitResult, chi_square_gof, histogram, ks_cdf
from src.tools.grid_dynamics import _check_cap, _resolve_cap
from src.tools.laws import OffspringLaw
from src.utils.errors import DomainError
from src.utils.rng import TAG_SBM, Stream, as_generator

MIN_VALIDATION_SAMPLES = 10**4


def _check_mu(mu: float) -> None:
    if not mu > 1.0:
        raise DomainError(f"mu must be > 1, got {mu}")


def _check_k(k: int) -> None:
    if k < 1:
        raise DomainError(f"sibling count must be >= 1, got {k}")


# =============================================================================
# BRANCH TIMES AND Q_k
# =============================================================================

def branch_time_cdf(v, mu: float):
    """F(v) = ((1 - v)^-1 - 1) / (mu - 1) on [0, 1 - 1/mu]."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0 - 1.0 / mu)
    return (1.0 / (1.0 - v) - 1.0) / (mu - 1.0)


def branch_time_quantile(u, mu: float):
    """Inverse of branch_time_cdf."""
    return 1.0 - 1.0 / (1.0 + (mu - 1.0) * np.asarray(u, dtype=float))


def sample_branch_times(k: int, mu: float, stream: Union[Stream, np.random.Generator]) -> np.ndarray:
    """k - 1 sorted i.i.d. times with density (1 - v)^-2 / (mu - 1)."""
    _check_mu(mu)
    _check_k(k)
    if k == 1:
        return np.zeros(0)
    gen = as_generator(stream)
    return np.sort(branch_time_quantile(gen.random(k - 1), mu))


@dataclass(frozen=True, eq=False)
class QkSample:
    k: int
    points: np.ndarray
    branch_times: np.ndarray


def sample_qk_batch(k: int, mu: float, d: int, count: int, gen: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``count`` independent draws of Q_k: points (count, k, d) and branch times (count, k - 1).

    Each draw starts one Brownian lineage at 0. At every sorted branch time
    the live lineages are advanced and a uniformly chosen one is duplicated;
    all k lineages then run to 1 - 1/mu, get scaled by sqrt(mu) and permuted.
    """
    _check_mu(mu)
    _check_k(k)
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    horizon = 1.0 - 1.0 / mu
    times = np.sort(branch_time_quantile(gen.random((count, k - 1)), mu), axis=1)
    ends = np.zeros((count, k, d))
    now = np.zeros(count)
    rows = np.arange(count)
    for j in range(k - 1):
        dt = np.maximum(times[:, j] - now, 0.0)
        ends[:, : j + 1] += np.sqrt(dt)[:, None, None] * gen.standard_normal((count, j + 1, d))
        now = times[:, j]
        pick = gen.integers(0, j + 1, size=count)
        ends[:, j + 1] = ends[rows, pick]
    ends += np.sqrt(np.maximum(horizon - now, 0.0))[:, None, None] * gen.standard_normal((count, k, d))
    ends *= math.sqrt(mu)
    order = np.argsort(gen.random((count, k)), axis=1)
    return np.take_along_axis(ends, order[:, :, None], axis=1), times


def sample_qk(k: int, mu: float, d: int, stream: Union[Stream, np.random.Generator]) -> QkSample:
    """One exchangeable draw of k sibling displacements."""
    points, times = sample_qk_batch(k, mu, d, 1, as_generator(stream))
    return QkSample(k, points[0], times[0])


# =============================================================================
# FREE-MODE RUN
# =============================================================================

@dataclass(frozen=True, eq=False)
class PointCloudGeneration:
    generation: int
    positions: np.ndarray
    weight: float
    offspring_counts: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.positions.shape[0])

    @property
    def total_mass(self) -> float:
        return self.weight * self.size

    def to_frame(self) -> pd.DataFrame:
        d = self.positions.shape[1]
        frame = pd.DataFrame(self.positions, columns=[f"x_{i + 1}" for i in range(d)])
        frame.insert(0, "gen", self.generation)
        frame["weight"] = self.weight
        return frame


def free_run_variance(mu: float, n: int) -> float:
    """Per-coordinate variance of a generation-n position: (mu - 1) sum_{m<=n} mu^-m = 1 - mu^-n."""
    _check_mu(mu)
    if n < 0:
        raise DomainError(f"generation must be >= 0, got {n}")
    return -math.expm1(-n * math.log(mu))


def strm_free_run(
    mu: float,
    d: int,
    generations: int,
    stream: Stream,
    cap: Optional[int] = None,
) -> List[PointCloudGeneration]:
    """
    Point clouds for generations 0..generations.

    Parents are grouped by offspring number k so each group draws its Q_k
    samples in one batch; children of a parent stay contiguous, in parent order.
    """
    _check_mu(mu)
    if generations < 0:
        raise DomainError(f"generations must be >= 0, got {generations}")
    cap = _resolve_cap(cap)
    law = OffspringLaw.geometric(mu)
    rho = mu ** -0.5
    positions = np.zeros((1, d))
    clouds = [PointCloudGeneration(0, positions, 1.0)]
    for n in range(1, generations + 1):
        gen = stream.child(TAG_SBM, n).generator()
        z = law.sample(gen, size=positions.shape[0])
        total = int(z.sum())
        _check_cap(total, cap, f"population at generation {n}")
        starts = np.concatenate([[0], np.cumsum(z)[:-1]])
        children = np.empty((total, d))
        for k in np.unique(z).tolist():
            parents = np.flatnonzero(z == k)
            points, _ = sample_qk_batch(k, mu, d, parents.size, gen)
            slots = starts[parents][:, None] + np.arange(k)[None, :]
            children[slots.ravel()] = (positions[parents][:, None, :] + rho**n * points).reshape(-1, d)
        clouds[-1] = replace(clouds[-1], offspring_counts=z)
        positions = children
        clouds.append(PointCloudGeneration(n, positions, mu**-n))
    return clouds


def uniform_particle(run: Sequence[PointCloudGeneration], gen: np.random.Generator, generation: Optional[int] = None) -> np.ndarray:
    """Position of a uniformly chosen particle of one generation (the last by default)."""
    cloud = run[-1] if generation is None else run[generation]
    if cloud.size == 0:
        raise DomainError(f"generation {cloud.generation} is empty")
    return cloud.positions[int(gen.integers(cloud.size))]


def export_cloud_csv(run: Sequence[PointCloudGeneration], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat([cloud.to_frame() for cloud in run], ignore_index=True).to_csv(path, index=False)
    return path


# =============================================================================
# VALIDATORS
# =============================================================================

def validate_offspring_geometric(samples, mu: float) -> FitResult:
    """Chi-square of offspring samples against P(Z = k) = (1/mu)(1 - 1/mu)^(k-1), tail bins pooled."""
    _check_mu(mu)
    samples = np.asarray(samples, dtype=np.int64)
    counts = histogram(samples)
    table = OffspringLaw.geometric(mu).pmf_table(max(int(counts.size) - 1, 1))
    result = chi_square_gof(counts, table, name="offspring_geometric")
    if samples.size < MIN_VALIDATION_SAMPLES:
        note = f"only {samples.size} samples (< {MIN_VALIDATION_SAMPLES}); the test has little power"
        result = replace(result, warning=f"{result.warning}; {note}" if result.warning else note)
    return result


def validate_branch_times(times, mu: float) -> FitResult:
    """KS of branch times against their closed-form CDF."""
    _check_mu(mu)
    return ks_cdf(np.asarray(times, dtype=float), lambda v: branch_time_cdf(v, mu), name="branch_times")
