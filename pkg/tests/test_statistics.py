import math

import numpy as np
import pytest

from src.analysis.statistics import (
    chi_square_binned,
    chi_square_gof,
    chi_square_homogeneity,
    histogram,
    ks_normal,
    mean_interval,
    pool_bins,
    ratio_interval,
    trend_test,
    wilson_interval,
)
from src.utils.errors import DomainError


class TestWilson:
    def test_zero_successes_pins_lower_end(self):
        freq = wilson_interval(0, 100)
        assert freq.lo == 0.0
        assert 0.0 < freq.hi < 0.05

    def test_all_successes_pins_upper_end(self):
        freq = wilson_interval(100, 100)
        assert freq.hi == 1.0
        assert freq.lo > 0.95

    def test_half(self):
        freq = wilson_interval(50, 100)
        assert freq.estimate == 0.5
        assert freq.hi - freq.lo == pytest.approx(0.192, abs=0.002)
        assert freq.contains(0.5)

    def test_wider_at_three_sigma(self):
        narrow = wilson_interval(30, 200)
        wide = wilson_interval(30, 200, z=3.0)
        assert wide.lo < narrow.lo and wide.hi > narrow.hi

    def test_no_trials_is_undefined(self):
        freq = wilson_interval(0, 0)
        assert freq.undefined
        assert math.isnan(freq.estimate)
        assert not freq.contains(0.5)

    def test_bad_counts(self):
        with pytest.raises(DomainError):
            wilson_interval(5, 3)


def test_mean_interval():
    est = mean_interval([1.0, 2.0, 3.0, 4.0])
    assert est.mean == 2.5
    assert est.lo < 2.5 < est.hi
    assert est.n == 4
    assert math.isnan(mean_interval([]).mean)


def test_ratio_interval():
    a = wilson_interval(400, 1000)
    b = wilson_interval(800, 1000)
    est = ratio_interval(a, b)
    assert est.mean == pytest.approx(0.5)
    assert est.lo < 0.5 < est.hi
    assert math.isnan(ratio_interval(wilson_interval(0, 10), b).mean)


def test_pool_bins_reaches_min_expected():
    obs, exp = pool_bins(np.array([10, 3, 1, 1, 0]), np.array([9.0, 4.0, 1.0, 0.5, 0.5]))
    assert obs.sum() == 15
    assert exp.sum() == pytest.approx(15.0)
    assert np.all(exp >= 5.0)


def test_chi_square_gof_accepts_own_law():
    gen = np.random.default_rng(3)
    samples = gen.poisson(2.0, size=20_000)
    from scipy import stats

    probs = stats.poisson.pmf(np.arange(30), 2.0)
    fit = chi_square_gof(histogram(samples), probs)
    assert fit.passed(alpha=0.001)
    assert fit.dof >= 5


def test_chi_square_gof_rejects_wrong_law():
    gen = np.random.default_rng(3)
    samples = gen.poisson(2.0, size=20_000)
    from scipy import stats

    fit = chi_square_gof(histogram(samples), stats.poisson.pmf(np.arange(30), 2.5))
    assert not fit.passed()


def test_chi_square_homogeneity_single_bin_warns():
    fit = chi_square_homogeneity([10], [12])
    assert fit.p_value == 1.0
    assert fit.warning


def test_chi_square_binned_same_law():
    gen = np.random.default_rng(8)
    fit = chi_square_binned(gen.exponential(size=5_000), gen.exponential(size=5_000))
    assert fit.passed(alpha=0.001)


def test_ks_normal():
    gen = np.random.default_rng(4)
    assert ks_normal(gen.normal(0.0, 2.0, size=5_000), variance=4.0).passed(alpha=0.001)
    assert not ks_normal(gen.normal(0.0, 2.0, size=5_000), variance=1.0).passed()


def test_trend_test():
    x = np.arange(20)
    assert trend_test(x, 2.0 * x + 1.0 + np.sin(x)).significant_positive()
    assert not trend_test(x, -x.astype(float)).significant_positive()
