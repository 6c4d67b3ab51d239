import json
import math

import pytest

from src.experiments.config import build_config
from src.experiments.registry import SuiteCategory, get_registry
from src.experiments.runner import run_experiment
from src.experiments.suites import SUITE_FUNCTIONS, SuiteContext, SuiteResult, _anchored_occupancy
from src.tools.grid_dynamics import run
from src.tools.laws import ModelParams
from src.utils.errors import AcceptanceFailure, ConfigError
from src.utils.rng import Stream


def config_for(name, **overrides):
    suite = get_registry().resolve(name)
    file_values = overrides.pop("file_values", None)
    return build_config(suite.id, defaults=suite.defaults, file_values=file_values, overrides=overrides)


def read(path):
    return json.loads(path.read_text())


def summary_of(config):
    """RunSummary whether or not the acceptance checks passed."""
    try:
        return run_experiment(config)
    except AcceptanceFailure as e:
        return e.summary


class TestRegistry:
    def test_every_suite_has_a_function(self):
        registry = get_registry()
        assert len(registry.ids()) == 16
        for suite in registry.get_all_suites():
            assert suite.function_name in SUITE_FUNCTIONS

    def test_defaults_validate(self):
        for suite in get_registry().get_all_suites():
            build_config(suite.id, defaults=suite.defaults)

    def test_resolve(self):
        registry = get_registry()
        assert registry.resolve("gamma").id == "gamma-supermartingale"
        assert registry.resolve("GW_Exact_Tables").id == "gw-exact-tables"
        with pytest.raises(ConfigError) as info:
            registry.resolve("survivl")
        assert "survival" in info.value.message

    def test_categories(self):
        oracle = {s.id for s in get_registry().get_suites_by_category(SuiteCategory.ORACLE)}
        assert {"gw-exact-tables", "survival", "hitting"} <= oracle


class TestRunner:
    def test_zero_replicates_writes_an_empty_summary(self, tmp_path):
        summary = run_experiment(config_for("survival", replicates=0, output_dir=tmp_path))
        assert summary.checks == [] and summary.records == []
        assert summary.passed
        written = read(tmp_path / "summary.json")
        assert written["replicates"] == 0
        manifest = read(tmp_path / "manifest.json")
        assert manifest["config_hash"] == summary.config_hash
        assert "summary.json" in manifest["files"]

    def test_exact_tables(self, tmp_path):
        summary = run_experiment(config_for("gw-exact-tables", output_dir=tmp_path))
        assert summary.passed
        first = next(c for c in summary.checks if c.name == "critical: survival[1] = 1 - f_R(0)")
        assert first.detail["exact"] == pytest.approx(1.0 - math.exp(-1.0))
        assert (tmp_path / "curve_critical.csv").exists()
        assert (tmp_path / "curve_subcritical.csv").exists()

    def test_default_output_dir(self, tmp_path):
        summary = run_experiment(config_for("survival", replicates=0))
        assert summary.output_dir == tmp_path / "output" / "survival"
        assert (summary.output_dir / "manifest.json").exists()

    def test_failed_checks_raise_after_writing(self, tmp_path, monkeypatch):
        def failing(ctx):
            result = SuiteResult()
            result.check("always fails", False, reason="test")
            return result

        monkeypatch.setitem(SUITE_FUNCTIONS, "survival", failing)
        with pytest.raises(AcceptanceFailure) as info:
            run_experiment(config_for("survival", replicates=1, output_dir=tmp_path))
        assert info.value.exit_code == 4
        assert info.value.summary.checks[0].name == "always fails"
        assert read(tmp_path / "summary.json")["passed"] is False

    def test_summary_is_identical_across_thread_counts(self, tmp_path):
        one = summary_of(config_for("coupling-containment", replicates=30, levels=5, threads=1, output_dir=tmp_path / "a"))
        four = summary_of(config_for("coupling-containment", replicates=30, levels=5, threads=4, output_dir=tmp_path / "b"))
        assert one.to_dict() == four.to_dict()
        assert (tmp_path / "a" / "containment.csv").read_text() == (tmp_path / "b" / "containment.csv").read_text()


class TestSuites:
    def context(self, name, threads=1, **overrides):
        config = config_for(name, **overrides)
        return SuiteContext(config, get_registry().resolve(name).id, threads=threads)

    def test_survival_records_do_not_depend_on_threads(self):
        a = SUITE_FUNCTIONS["survival"](self.context("survival", replicates=60, levels=3))
        b = SUITE_FUNCTIONS["survival"](self.context("survival", threads=4, replicates=60, levels=3))
        assert a.records == b.records

    def test_replicate_streams_are_keyed_by_suite(self):
        ctx = self.context("survival", replicates=1)
        assert ctx.replicate(3, "critical") == Stream(ctx.config.seed).child("survival", "critical", 3)

    def test_coupling_containment_has_no_violations(self):
        result = SUITE_FUNCTIONS["coupling_containment"](self.context("coupling-containment", replicates=100, levels=6))
        violation_checks = [c for c in result.checks if "violations" in c.name]
        assert violation_checks and all(c.passed for c in violation_checks)
        assert all(r["violations"] == 0 for r in result.records)

    def test_monotone_coupling(self):
        result = SUITE_FUNCTIONS["monotone_coupling"](self.context("monotone-coupling", replicates=50, levels=5))
        assert result.passed

    def test_monotone_pairs_are_validated(self):
        ctx = self.context("monotone-coupling", replicates=5, file_values={"options": {"pairs": [[0.6, 0.8, 1.0]]}})
        with pytest.raises(ConfigError):
            SUITE_FUNCTIONS["monotone_coupling"](ctx)

    def test_sweep_axis_is_checked(self):
        ctx = self.context("coupling-containment", replicates=5, file_values={"sweep_axis": "p"})
        with pytest.raises(ConfigError):
            SUITE_FUNCTIONS["coupling_containment"](ctx)

    def test_cases_fall_back_to_the_base_model(self):
        ctx = self.context("mean-measure", replicates=1)
        (label, params, levels), = ctx.cases()
        assert label == "default"
        assert params.d == 2 and levels == 5

    def test_anchored_occupancy_is_exact_before_the_anchor(self):
        params = ModelParams.from_c(2, 2, 1.2)
        stream = Stream(3)
        occ = _anchored_occupancy(params, 4, 4, stream, stream.child("pick").generator(), None)
        assert occ.tolist() == [s.occupied for s in run(params, 4, stream)]


# Small configurations that still reach every check of each suite.
SMOKE_RUNS = [
    ("gw-exact-tables", {}, {}, ["critical: M * survival[M] near 2 / Var(R)", "subcritical: decay rate = ln E[R]"]),
    ("survival", {"replicates": 30, "levels": 3}, {}, ["critical: survival at m=3", "subcritical: survival at m=3"]),
    ("hitting", {"replicates": 30, "levels": 3}, {}, ["critical: hitting at m=3", "subcritical: hit implies occupied"]),
    (
        "mean-measure",
        {"replicates": 30, "levels": 3},
        {"options": {"cells": 5, "compare_level": 2}},
        ["E[W_3] = 1", "fast and generic total agree at level 2", "fast and generic occupied agree at level 2"],
    ),
    ("fractal-survival", {"replicates": 30, "levels": 10}, {}, ["p=0.24: extinction by level 10", "p=0.5: survival = 1 - q"]),
    ("coupling-containment", {"replicates": 20, "levels": 4}, {}, ["c=0.6: no containment violations", "c=1: level-1 keep rate = 1 - e^-c"]),
    (
        "monotone-coupling",
        {"replicates": 20, "levels": 4},
        {"options": {"identical_replicates": 3}},
        ["c1=0.6,c2=1: no containment violations", "c1 = c2 = 0.6 gives identical processes"],
    ),
    (
        "crossing-sweep",
        {"replicates": 10, "levels": 4},
        {"sweep": [0.5, 0.9]},
        ["p=0.5: face => paper_l => closed_cube", "paper_l crossing frequency monotone in p", "crossing at p=0.5 stays below 0.05"],
    ),
    ("beta-bracket", {"replicates": 5, "levels": 3}, {"sweep": [1.0, 1.5]}, ["paper_l crossing frequency nonincreasing in beta"]),
    (
        "td-certify",
        {"replicates": 10},
        {"options": {"m": 1, "horizon": 6, "frontier_cap": 20_000}},
        ["boundary: certificate found in >= 0.95 of surviving runs", "contrast: success rate below boundary"],
    ),
    (
        "growth-exponent",
        {"replicates": 40, "levels": 5},
        {"d": 2, "options": {"anchor_level": 3, "fit_from": 3}},
        ["growth slope within 0.2 of 2"],
    ),
    (
        "h-statistic",
        {"replicates": 20, "levels": 5},
        {"options": {"anchor_level": 3, "fit_from": 3}},
        ["no significant positive trend in h"],
    ),
    (
        "ball-hitting",
        {"replicates": 10},
        {"options": {"radius": 0.5, "covering_replicates": 5}},
        ["critical: hit ratio near 2", "critical: covering ball reproduces survival", "subcritical: covering ball reproduces survival"],
    ),
    (
        "gamma-supermartingale",
        {"replicates": 20},
        {"options": {"ells": [0, 1], "n_max": 5}},
        ["l=0: E[M_n+1 | M_n = k] <= k + 3 se", "l=1: absorbed within 5 steps"],
    ),
    (
        "spine",
        {"replicates": 20},
        {"options": {"long_run": 2_000, "event_generations": [3, 5], "transience_steps": 200, "transience_replicates": 3}},
        [
            "long-run mean of C_m",
            "spine offspring follow the size-biased law",
            "pooled E_m frequency = closed form",
            "E_m frequency constant across m",
            "critical chain climbs higher than the subcritical one",
        ],
    ),
    (
        "sbm-validate",
        {"replicates": 10},
        {"options": {"samples": 500, "ks": [1, 3], "generations": 5}},
        ["Q_1 marginal ~ N(0, mu - 1)", "Q_3 exchangeable", "branch times", "offspring ~ Geometric", "mean total mass = 1"],
    ),
]


class TestSuiteRuns:
    """Every suite runs end to end at reduced size and reports its checks."""

    def test_every_suite_is_covered(self):
        assert {name for name, *_ in SMOKE_RUNS} == set(get_registry().ids())

    @pytest.mark.parametrize("name, overrides, file_values, expected", SMOKE_RUNS, ids=[r[0] for r in SMOKE_RUNS])
    def test_suite_completes(self, tmp_path, name, overrides, file_values, expected):
        config = config_for(name, output_dir=tmp_path, file_values=file_values, **overrides)
        summary = summary_of(config)
        names = {c.name for c in summary.checks}
        for check in expected:
            assert check in names
        on_disk = read(tmp_path / "summary.json")
        assert [c["name"] for c in on_disk["checks"]] == [c.name for c in summary.checks]
        assert (tmp_path / "manifest.json").exists()


@pytest.mark.slow
class TestAcceptance:
    """Reduced-size runs of the statistical suites."""

    def test_survival(self, tmp_path):
        summary = run_experiment(config_for("survival", replicates=3_000, levels=5, output_dir=tmp_path))
        assert summary.passed

    def test_fractal_survival(self, tmp_path):
        assert run_experiment(config_for("fractal-survival", replicates=500, levels=30, output_dir=tmp_path)).passed

    def test_sbm(self, tmp_path):
        assert run_experiment(config_for("sbm-validate", replicates=200, output_dir=tmp_path)).passed
