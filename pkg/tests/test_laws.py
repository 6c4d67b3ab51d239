import math

import numpy as np
import pytest

from src.tools.laws import (
    DisplacementKind,
    DisplacementLaw,
    ModelParams,
    OffspringKind,
    OffspringLaw,
    Regime,
    sample,
    sample_digits,
)
from src.utils.errors import ConfigError, DomainError, InvalidLawError, RegimeError
from src.utils.rng import Stream


class TestConstruction:
    @pytest.mark.parametrize("build", [
        lambda: OffspringLaw.poisson(-1.0),
        lambda: OffspringLaw.poisson(float("nan")),
        lambda: OffspringLaw.geometric(0.5),
        lambda: OffspringLaw.binomial(3, 1.5),
        lambda: OffspringLaw.binomial(-1, 0.5),
        lambda: OffspringLaw.deterministic(-2),
        lambda: OffspringLaw.finite_table([0.5, 0.4]),
        lambda: OffspringLaw.finite_table([1.2, -0.2]),
        lambda: OffspringLaw.finite_table([]),
    ])
    def test_invalid(self, build):
        with pytest.raises(InvalidLawError):
            build()

    def test_table_trims_trailing_zeros(self):
        law = OffspringLaw.finite_table([0.25, 0.75, 0.0, 0.0])
        assert law.probs == (0.25, 0.75)

    def test_spec_round_trip_with_alias(self):
        law = OffspringLaw.from_spec({"kind": "geom", "mean": 2.0})
        assert law.kind == OffspringKind.GEOMETRIC
        assert OffspringLaw.from_spec(law.to_spec()) == law

    def test_spec_missing_field(self):
        with pytest.raises(InvalidLawError):
            OffspringLaw.from_spec({"kind": "binomial", "n": 3})


class TestMoments:
    @pytest.mark.parametrize("law, mean, variance", [
        (OffspringLaw.poisson(4.0), 4.0, 4.0),
        (OffspringLaw.geometric(2.0), 2.0, 2.0),
        (OffspringLaw.binomial(4, 0.5), 2.0, 1.0),
        (OffspringLaw.deterministic(3), 3.0, 0.0),
        (OffspringLaw.finite_table([0.25, 0.5, 0.25]), 1.0, 0.5),
    ])
    def test_mean_and_variance(self, law, mean, variance):
        assert law.mean == pytest.approx(mean)
        assert law.variance == pytest.approx(variance)

    def test_thinned_moments(self):
        moments = OffspringLaw.poisson(4.0).thinned_moments(0.25)
        assert moments.mean == pytest.approx(1.0)
        assert moments.variance == pytest.approx(1.0)
        with pytest.raises(DomainError):
            OffspringLaw.poisson(4.0).thinned_moments(0.0)


class TestGeneratingFunctions:
    @pytest.mark.parametrize("law", [
        OffspringLaw.poisson(3.0),
        OffspringLaw.geometric(2.5),
        OffspringLaw.binomial(5, 0.3),
        OffspringLaw.deterministic(2),
        OffspringLaw.finite_table([0.1, 0.2, 0.7]),
    ])
    def test_pgf_endpoints_and_table(self, law):
        assert float(law.pgf(1.0)) == pytest.approx(1.0)
        table = law.pmf_table()
        assert float(law.pgf(0.0)) == pytest.approx(table[0])
        s = 0.37
        assert float(law.pgf(s)) == pytest.approx(float(np.sum(table * s ** np.arange(table.size))), rel=1e-10)

    def test_pgf_is_vectorised(self):
        values = OffspringLaw.poisson(2.0).pgf(np.array([0.0, 0.5, 1.0]))
        assert values.shape == (3,)
        assert values[0] == pytest.approx(math.exp(-2.0))

    def test_pgf_rejects_outside_unit_interval(self):
        with pytest.raises(DomainError):
            OffspringLaw.poisson(2.0).pgf(1.5)

    def test_complement_pgf_keeps_precision(self):
        law = OffspringLaw.poisson(4.0)
        assert law.complement_pgf(1e-20) == pytest.approx(4e-20, rel=1e-12)
        assert law.complement_pgf(1.0) == pytest.approx(1.0 - math.exp(-4.0))

    def test_thinned_pgf(self):
        law = OffspringLaw.poisson(4.0)
        assert float(law.thinned_pgf(0.25, 0.0)) == pytest.approx(math.exp(-1.0))

    def test_geometric_pmf(self):
        table = OffspringLaw.geometric(2.0).pmf_table(4)
        assert table[0] == 0.0
        assert table[1] == pytest.approx(0.5)
        assert table[3] == pytest.approx(0.125)


class TestSizeBiased:
    def test_poisson_size_bias_shifts_by_one(self):
        star = OffspringLaw.poisson(3.0).size_biased()
        assert star.mean == pytest.approx(4.0, rel=1e-9)

    def test_table(self):
        star = OffspringLaw.finite_table([0.5, 0.25, 0.25]).size_biased()
        assert star.probs == pytest.approx((0.0, 1 / 3, 2 / 3))

    def test_deterministic_is_fixed(self):
        law = OffspringLaw.deterministic(2)
        assert law.size_biased() is law

    def test_mean_zero_cannot_be_size_biased(self):
        with pytest.raises(InvalidLawError):
            OffspringLaw.deterministic(0).size_biased()


class TestSampling:
    def test_reproducible(self):
        law = OffspringLaw.finite_table([0.2, 0.3, 0.5])
        a = sample(law, Stream(5).child("laws"), size=100)
        b = sample(law, Stream(5).child("laws"), size=100)
        assert np.array_equal(a, b)
        assert a.dtype == np.int64
        assert set(np.unique(a)) <= {0, 1, 2}

    def test_scalar_draw(self):
        assert isinstance(sample(OffspringLaw.poisson(1.0), Stream(1)), int)
        assert sample(OffspringLaw.deterministic(3), Stream(1)) == 3

    def test_geometric_support_starts_at_one(self):
        draws = sample(OffspringLaw.geometric(1.5), Stream(2), size=2_000)
        assert draws.min() >= 1
        assert draws.mean() == pytest.approx(1.5, abs=0.1)

    def test_sample_digits(self):
        digits = sample_digits(3, 4, Stream(9), size=50)
        assert digits.shape == (50, 3)
        assert digits.min() >= 0 and digits.max() <= 3
        with pytest.raises(DomainError):
            sample_digits(0, 2, Stream(9))


class TestDisplacement:
    def test_distinct_sites_never_share_a_cell(self):
        law = DisplacementLaw(DisplacementKind.DISTINCT_SITES)
        z = np.array([4, 0, 2, 3])
        digits = law.sample_children_digits(z, 2, 2, np.random.default_rng(1))
        assert digits.shape == (9, 2)
        first = digits[:4]
        assert len({tuple(r) for r in first}) == 4

    def test_distinct_sites_cap(self):
        law = DisplacementLaw(DisplacementKind.DISTINCT_SITES)
        with pytest.raises(DomainError):
            law.sample_children_digits(np.array([5]), 2, 2, np.random.default_rng(1))

    @pytest.mark.parametrize("kind", list(DisplacementKind))
    def test_tail_condition_holds_for_every_kind(self, kind):
        law = DisplacementLaw(kind)
        assert law.satisfies_tail_condition(0.5)
        assert law.satisfies_tail_condition(50.0)

    def test_tail_condition(self):
        assert DisplacementLaw().satisfies_tail_condition(2.0)
        with pytest.raises(DomainError):
            DisplacementLaw().satisfies_tail_condition(0.0)


class TestModelParams:
    def test_derived_quantities(self, critical_2d):
        assert critical_2d.p == 0.25
        assert critical_2d.c == pytest.approx(1.0)
        assert critical_2d.beta == pytest.approx(1.0)
        assert critical_2d.rho == 0.5
        assert critical_2d.regime == Regime.CRITICAL

    def test_regimes(self, subcritical_3d):
        assert subcritical_3d.regime == Regime.SUBCRITICAL
        assert ModelParams.from_c(2, 2, 1.5).regime == Regime.SUPERCRITICAL_SPATIAL

    def test_from_beta(self):
        params = ModelParams.from_beta(2, 2, 1.0)
        assert params.mu == pytest.approx(4.0)
        assert params.beta == pytest.approx(1.0)

    def test_beta_needs_supercritical_offspring(self):
        with pytest.raises(RegimeError):
            ModelParams(d=2, B=2, offspring=OffspringLaw.poisson(1.0)).beta

    @pytest.mark.parametrize("d, B", [(0, 2), (2, 1), (1.5, 2)])
    def test_invalid_geometry(self, d, B):
        with pytest.raises(ConfigError):
            ModelParams(d=d, B=B, offspring=OffspringLaw.poisson(1.0))

    def test_gaussian_displacement_needs_free_mode(self):
        with pytest.raises(ConfigError):
            ModelParams(d=2, B=2, offspring=OffspringLaw.poisson(1.0),
                        displacement=DisplacementLaw(DisplacementKind.GAUSSIAN_SIBLING))

    def test_to_dict(self, critical_2d):
        out = critical_2d.to_dict()
        assert out["offspring"] == {"kind": "poisson", "mean": 4.0}
        assert out["regime"] == Regime.CRITICAL.value
        assert out["beta"] == pytest.approx(1.0)
