import numpy as np
import pytest

from src.analysis.statistics import ks_normal
from src.tools.sbm_bridge import (
    MIN_VALIDATION_SAMPLES,
    branch_time_cdf,
    branch_time_quantile,
    export_cloud_csv,
    free_run_variance,
    sample_branch_times,
    sample_qk,
    sample_qk_batch,
    strm_free_run,
    uniform_particle,
    validate_branch_times,
    validate_offspring_geometric,
)
from src.tools.laws import OffspringLaw
from src.utils.errors import DomainError, ResourceLimitError
from src.utils.rng import Stream

MU = 4.0


class TestBranchTimes:
    def test_cdf_endpoints(self):
        assert float(branch_time_cdf(0.0, MU)) == 0.0
        assert float(branch_time_cdf(1.0 - 1.0 / MU, MU)) == pytest.approx(1.0)

    def test_quantile_inverts_cdf(self):
        u = np.linspace(0.0, 1.0, 11)
        assert branch_time_cdf(branch_time_quantile(u, MU), MU) == pytest.approx(u)

    def test_samples(self, stream):
        assert sample_branch_times(1, MU, stream).size == 0
        times = sample_branch_times(5, MU, stream)
        assert times.size == 4
        assert np.all(np.diff(times) >= 0)
        assert np.all((times >= 0) & (times <= 1.0 - 1.0 / MU))

    def test_validator_accepts_sampled_times(self):
        times = np.concatenate([sample_branch_times(11, MU, Stream(3).child(i)) for i in range(2_000)])
        assert validate_branch_times(times, MU).passed(alpha=0.001)

    @pytest.mark.parametrize("k, mu", [(0, MU), (3, 1.0), (3, 0.5)])
    def test_domain(self, k, mu, stream):
        with pytest.raises(DomainError):
            sample_branch_times(k, mu, stream)


class TestQk:
    def test_shape(self, stream):
        draw = sample_qk(3, MU, 2, stream)
        assert draw.points.shape == (3, 2)
        assert draw.branch_times.shape == (2,)

    def test_single_sibling_is_gaussian(self):
        points, _ = sample_qk_batch(1, MU, 1, 20_000, np.random.default_rng(11))
        assert points[:, 0, 0].var() == pytest.approx(MU - 1.0, rel=0.05)

    def test_marginals_have_variance_mu_minus_one(self):
        points, _ = sample_qk_batch(4, MU, 2, 20_000, np.random.default_rng(12))
        for j in range(4):
            assert points[:, j, 0].var() == pytest.approx(MU - 1.0, rel=0.05)
            assert abs(points[:, j, 1].mean()) < 0.1

    def test_siblings_are_positively_correlated(self):
        points, _ = sample_qk_batch(2, MU, 1, 20_000, np.random.default_rng(13))
        assert np.corrcoef(points[:, 0, 0], points[:, 1, 0])[0, 1] > 0.1

    def test_marginal_passes_ks_against_the_normal_law(self):
        points, _ = sample_qk_batch(3, MU, 2, 5_000, np.random.default_rng(14))
        coords = points[:, 0, :].ravel()
        assert ks_normal(coords, MU - 1.0).passed(0.001)
        assert not ks_normal(coords, 1.0).passed(0.001)


class TestFreeRun:
    def test_structure(self, stream):
        clouds = strm_free_run(MU, 2, 4, stream)
        assert [c.generation for c in clouds] == list(range(5))
        for parent, child in zip(clouds[:-1], clouds[1:]):
            assert parent.offspring_counts.min() >= 1
            assert child.size == int(parent.offspring_counts.sum())
            assert child.weight == pytest.approx(MU ** -child.generation)
        assert clouds[-1].offspring_counts is None

    def test_reproducible(self):
        a = strm_free_run(MU, 2, 3, Stream(5))
        b = strm_free_run(MU, 2, 3, Stream(5))
        assert np.array_equal(a[-1].positions, b[-1].positions)

    def test_position_variance(self):
        n = 3
        xs = [uniform_particle(strm_free_run(MU, 1, n, Stream(7).child(i)), np.random.default_rng(i))[0] for i in range(3_000)]
        assert np.var(xs) == pytest.approx(free_run_variance(MU, n), rel=0.1)

    def test_free_run_variance(self):
        assert free_run_variance(MU, 0) == 0.0
        assert free_run_variance(MU, 1) == pytest.approx(0.75)
        with pytest.raises(DomainError):
            free_run_variance(MU, -1)

    def test_cap(self, stream):
        with pytest.raises(ResourceLimitError):
            strm_free_run(MU, 2, 10, stream, cap=50)

    def test_export(self, stream, tmp_path):
        path = export_cloud_csv(strm_free_run(MU, 2, 2, stream), tmp_path / "cloud.csv")
        assert path.read_text().splitlines()[0] == "gen,x_1,x_2,weight"


class TestOffspringValidator:
    def test_accepts_geometric_samples(self):
        samples = OffspringLaw.geometric(MU).sample(np.random.default_rng(1), size=MIN_VALIDATION_SAMPLES)
        fit = validate_offspring_geometric(samples, MU)
        assert fit.passed(alpha=0.001)
        assert fit.warning is None

    def test_rejects_poisson_samples(self):
        samples = np.random.default_rng(2).poisson(MU, size=MIN_VALIDATION_SAMPLES)
        assert not validate_offspring_geometric(samples, MU).passed()

    def test_small_samples_warn(self):
        samples = OffspringLaw.geometric(MU).sample(np.random.default_rng(1), size=500)
        assert "little power" in validate_offspring_geometric(samples, MU).warning
