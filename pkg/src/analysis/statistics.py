"""
Statistics helpers for experiment summaries.

- Wilson score intervals for frequencies (every reported frequency carries one)
- CLT intervals for means
- Goodness of fit: one/two-sample KS, chi-square with tail pooling,
  chi-square homogeneity of two count histograms
- One-sided trend test on a regression slope
"""
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import stats

from src.utils.errors import DomainError

ACCEPTANCE_ALPHA = 0.01


@dataclass(frozen=True)
class Frequency:
    """Binomial frequency with its Wilson interval."""
    successes: int
    trials: int
    estimate: float
    lo: float
    hi: float
    z: float = 1.96
    undefined: bool = False

    def contains(self, value: float) -> bool:
        return not self.undefined and self.lo <= value <= self.hi

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class MeanEstimate:
    """Sample mean with a normal-approximation interval."""
    mean: float
    std_error: float
    lo: float
    hi: float
    n: int
    z: float = 1.96

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class FitResult:
    """Outcome of a goodness-of-fit style test."""
    name: str
    statistic: float
    p_value: float
    n: int
    dof: Optional[int] = None
    warning: Optional[str] = None

    def passed(self, alpha: float = ACCEPTANCE_ALPHA) -> bool:
        return self.p_value > alpha

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TrendResult:
    slope: float
    intercept: float
    std_error: float
    p_value_positive: float
    n: int

    def significant_positive(self, alpha: float = 0.05) -> bool:
        return self.p_value_positive < alpha

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> Frequency:
    """Wilson score interval; trials=0 gives an undefined frequency."""
    successes, trials = int(successes), int(trials)
    if trials < 0 or successes < 0 or successes > trials:
        raise DomainError(f"need 0 <= successes <= trials, got {successes}/{trials}")
    if trials == 0:
        return Frequency(0, 0, math.nan, math.nan, math.nan, z, undefined=True)
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return Frequency(successes, trials, phat, lo, hi, z)


def mean_interval(samples: Union[Sequence[float], np.ndarray], z: float = 1.96) -> MeanEstimate:
    x = np.asarray(samples, dtype=float)
    n = int(x.size)
    if n == 0:
        return MeanEstimate(math.nan, math.nan, math.nan, math.nan, 0, z)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MeanEstimate(mean, se, mean - z * se, mean + z * se, n, z)


def ratio_interval(a: Frequency, b: Frequency, z: float = 1.96) -> MeanEstimate:
    """Interval for a.estimate / b.estimate via the delta method on the log ratio."""
    if a.undefined or b.undefined or a.successes == 0 or b.successes == 0:
        return MeanEstimate(math.nan, math.nan, math.nan, math.nan, 0, z)
    ratio = a.estimate / b.estimate
    log_se = math.sqrt(
        (1 - a.estimate) / (a.trials * a.estimate) + (1 - b.estimate) / (b.trials * b.estimate)
    )
    return MeanEstimate(ratio, ratio * log_se, ratio * math.exp(-z * log_se), ratio * math.exp(z * log_se), a.trials + b.trials, z)


def ks_normal(samples, variance: float, mean: float = 0.0) -> FitResult:
    x = np.asarray(samples, dtype=float)
    res = stats.kstest(x, "norm", args=(mean, math.sqrt(variance)))
    return FitResult("ks_normal", float(res.statistic), float(res.pvalue), int(x.size))


def ks_cdf(samples, cdf: Callable[[np.ndarray], np.ndarray], name: str = "ks") -> FitResult:
    x = np.asarray(samples, dtype=float)
    res = stats.kstest(x, cdf)
    return FitResult(name, float(res.statistic), float(res.pvalue), int(x.size))


def ks_two_sample(a, b) -> FitResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    res = stats.ks_2samp(a, b)
    return FitResult("ks_two_sample", float(res.statistic), float(res.pvalue), int(a.size + b.size))


def pool_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expected count reaches min_expected."""
    obs_out, exp_out = [], []
    acc_o, acc_e = 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
            acc_o, acc_e = 0.0, 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_out:
            obs_out[-1] += acc_o
            exp_out[-1] += acc_e
        else:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
    return np.asarray(obs_out), np.asarray(exp_out)


def chi_square_gof(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0, name: str = "chi_square") -> FitResult:
    """
    Chi-square goodness of fit of integer samples against a pmf.

    ``counts[k]`` is the number of samples equal to k; ``probs[k]`` the
    model probability. Any mass beyond the table goes into the last bin.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    size = max(counts.size, probs.size)
    counts = np.pad(counts, (0, size - counts.size))
    probs = np.pad(probs, (0, size - probs.size))
    probs[-1] += max(0.0, 1.0 - probs.sum())
    n = int(counts.sum())
    expected = probs * n
    obs, exp = pool_bins(counts, expected, min_expected)
    if obs.size < 2:
        return FitResult(name, 0.0, 1.0, n, 0, warning="fewer than two bins after pooling")
    # rescale so both sides sum identically (scipy checks this)
    exp = exp * obs.sum() / exp.sum()
    res = stats.chisquare(obs, exp)
    return FitResult(name, float(res.statistic), float(res.pvalue), n, int(obs.size - 1))


def chi_square_homogeneity(a_counts, b_counts, name: str = "chi_square_homogeneity") -> FitResult:
    """Are two histograms over the same bins draws from one law?"""
    size = max(len(a_counts), len(b_counts))
    table = np.zeros((2, size))
    table[0, : len(a_counts)] = a_counts
    table[1, : len(b_counts)] = b_counts
    table = table[:, table.sum(axis=0) > 0]
    n = int(table.sum())
    if table.shape[1] < 2:
        return FitResult(name, 0.0, 1.0, n, 0, warning="fewer than two non-empty bins")
    stat, p, dof, _ = stats.chi2_contingency(table)
    return FitResult(name, float(stat), float(p), n, int(dof))


def histogram(values, minlength: int = 0) -> np.ndarray:
    return np.bincount(np.asarray(values, dtype=np.int64), minlength=minlength)


def trend_test(x, y) -> TrendResult:
    """One-sided test for a positive regression slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = stats.linregress(x, y, alternative="greater")
    return TrendResult(float(res.slope), float(res.intercept), float(res.stderr), float(res.pvalue), int(x.size))


def chi_square_binned(a, b, bins: int = 20, name: str = "chi_square_binned") -> FitResult:
    """Homogeneity of two samples after binning both on their pooled quantiles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        return FitResult(name, 0.0, 1.0, int(a.size + b.size), 0, warning="empty sample")
    edges = np.unique(np.quantile(np.concatenate([a, b]), np.linspace(0.0, 1.0, bins + 1)))
    if edges.size < 2:
        return FitResult(name, 0.0, 1.0, int(a.size + b.size), 0, warning="samples are constant")
    a_counts, _ = np.histogram(a, bins=edges)
    b_counts, _ = np.histogram(b, bins=edges)
    return chi_square_homogeneity(a_counts, b_counts, name=name)
