import math

import numpy as np
import pytest

from src.analysis.gw_exact import (
    asymptotic_report,
    compose,
    export_curve_csv,
    extinction_prob,
    hitting_curve,
    survival_curve,
)
from src.tools.laws import OffspringLaw, Regime
from src.utils.errors import DomainError, RegimeError

POISSON_4 = OffspringLaw.poisson(4.0)


class TestExtinction:
    def test_poisson_two(self):
        q = extinction_prob(OffspringLaw.poisson(2.0))
        assert q == pytest.approx(0.2031878699, abs=1e-10)
        assert float(OffspringLaw.poisson(2.0).pgf(q)) == pytest.approx(q, abs=1e-14)

    def test_no_zero_mass(self):
        assert extinction_prob(OffspringLaw.geometric(2.0)) == 0.0

    def test_binary_table(self):
        # q solves q = 1/4 + 3/4 q^2
        assert extinction_prob(OffspringLaw.finite_table([0.25, 0.0, 0.75])) == pytest.approx(1 / 3, abs=1e-12)

    def test_needs_supercritical_law(self):
        with pytest.raises(RegimeError):
            extinction_prob(OffspringLaw.poisson(1.0))


class TestCurves:
    def test_first_levels(self):
        curve = survival_curve(POISSON_4, 0.25, 10)
        assert curve.survival[0] == 1.0
        assert curve.survival[1] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)
        assert np.all(np.diff(curve.survival) <= 0)

    def test_hitting_is_below_survival(self):
        curve = hitting_curve(POISSON_4, 0.25, 50)
        assert curve.q == pytest.approx(extinction_prob(POISSON_4))
        assert curve.hitting[0] == pytest.approx(1.0 - curve.q)
        assert np.all(curve.hitting <= curve.survival + 1e-15)

    def test_compose_matches_curve(self):
        curve = survival_curve(POISSON_4, 0.125, 30)
        for m in (0, 1, 7, 30):
            assert 1.0 - compose(POISSON_4, 0.125, m, 0.0) == pytest.approx(curve.survival[m], rel=1e-12)

    def test_regimes(self):
        assert survival_curve(POISSON_4, 0.25, 5).regime == Regime.CRITICAL
        assert survival_curve(POISSON_4, 0.125, 5).regime == Regime.SUBCRITICAL
        assert survival_curve(POISSON_4, 0.5, 5).regime == Regime.SUPERCRITICAL_SPATIAL

    def test_hitting_needs_supercritical_offspring(self):
        with pytest.raises(RegimeError):
            hitting_curve(OffspringLaw.poisson(0.9), 0.5, 10)

    @pytest.mark.parametrize("p, M", [(0.0, 10), (1.5, 10), (0.5, -1)])
    def test_bad_arguments(self, p, M):
        with pytest.raises(DomainError):
            survival_curve(POISSON_4, p, M)

    def test_compose_arguments(self):
        with pytest.raises(DomainError):
            compose(POISSON_4, 0.25, -1, 0.0)
        with pytest.raises(DomainError):
            compose(POISSON_4, 0.25, 2, 1.5)

    def test_underflow_is_flagged(self):
        curve = survival_curve(POISSON_4, 0.125, 2000)
        assert curve.underflow
        assert curve.warnings

    def test_export(self, tmp_path):
        path = export_curve_csv(survival_curve(POISSON_4, 0.25, 20), tmp_path / "curve.csv")
        assert path.read_text().splitlines()[0] == "m,survival,hitting"


class TestAsymptotics:
    def test_critical_constant(self):
        report = asymptotic_report(survival_curve(POISSON_4, 0.25, 1000))
        assert report.regime == Regime.CRITICAL
        assert report.kolmogorov_constant_exact == pytest.approx(2.0)
        assert report.kolmogorov_constant_est == pytest.approx(2.0, abs=0.02)
        assert report.scaled_survival_at_horizon == pytest.approx(2.0, rel=0.05)
        assert report.hitting_ratio_at_horizon == pytest.approx(1.0, abs=0.05)

    def test_reference_constant_differs_from_exact(self):
        report = asymptotic_report(survival_curve(POISSON_4, 0.25, 200))
        assert report.reference_constant == pytest.approx(8 / 3)
        assert report.notes

    def test_subcritical_decay(self):
        report = asymptotic_report(survival_curve(POISSON_4, 0.125, 200), window=(40, 80))
        assert report.regime == Regime.SUBCRITICAL
        assert report.decay_rate_exact == pytest.approx(math.log(0.5))
        assert report.decay_rate_est == pytest.approx(math.log(0.5), abs=1e-3)

    def test_supercritical_limit(self):
        curve = survival_curve(POISSON_4, 0.5, 200)
        report = asymptotic_report(curve)
        # thinned law is Poisson(2); the limit is its survival probability
        assert report.supercritical_limit == pytest.approx(1.0 - extinction_prob(OffspringLaw.poisson(2.0)), abs=1e-9)

    def test_short_horizon(self):
        with pytest.raises(DomainError):
            asymptotic_report(survival_curve(POISSON_4, 0.25, 50))

    def test_serialises(self):
        report = asymptotic_report(survival_curve(POISSON_4, 0.25, 100))
        assert '"regime": "critical"' in report.to_json()
