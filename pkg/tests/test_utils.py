import numpy as np
import pytest

from src.utils.errors import (
    AcceptanceFailure,
    ConfigError,
    DomainError,
    InvalidLawError,
    InvariantViolation,
    RegimeError,
    ResourceLimitError,
)
from src.utils.normalizer import normalize_adjacency, normalize_experiment, normalize_law_kind, suggest
from src.utils.parallel import map_replicates
from src.utils.rng import Stream, as_generator, root_stream
from src.utils.settings import DEFAULT_POPULATION_CAP, get_settings, reset_settings


class TestStream:
    def test_same_path_same_draws(self):
        a = Stream(7).child("grid", 3).generator().random(5)
        b = Stream(7).child("grid", 3).generator().random(5)
        assert np.array_equal(a, b)

    def test_children_are_independent_of_request_order(self):
        root = root_stream(7)
        late = root.child(2).generator().integers(0, 1000, 10)
        root.child(1).generator().integers(0, 1000, 10)
        assert np.array_equal(late, root.child(2).generator().integers(0, 1000, 10))

    def test_distinct_paths_differ(self):
        root = Stream(7)
        assert not np.array_equal(root.child(0).generator().random(8), root.child(1).generator().random(8))
        assert not np.array_equal(root.child("grid").generator().random(8), root.child("fractal").generator().random(8))

    def test_child_appends_path(self):
        s = Stream(1).child(3).child(4)
        assert s == Stream(1).child(3, 4)

    def test_seed_is_reduced_to_u64(self):
        assert Stream(2**64 + 5).seed == 5

    def test_negative_key_rejected(self):
        with pytest.raises(ValueError):
            Stream(1).child(-1)

    def test_as_generator(self):
        gen = np.random.default_rng(0)
        assert as_generator(gen) is gen
        assert isinstance(as_generator(Stream(1)), np.random.Generator)
        with pytest.raises(TypeError):
            as_generator(42)


class TestParallel:
    def test_results_in_replicate_order(self):
        assert map_replicates(lambda i: i * i, 10, threads=4) == [i * i for i in range(10)]

    def test_thread_count_does_not_change_results(self):
        def draw(i):
            return float(Stream(99).child(i).generator().random())

        assert map_replicates(draw, 16, threads=1) == map_replicates(draw, 16, threads=8)

    def test_zero_count(self):
        assert map_replicates(lambda i: i, 0, threads=4) == []


class TestNormalizer:
    @pytest.mark.parametrize("raw, expected", [
        ("face", "face"),
        ("PaperL", "paper_l"),
        ("paper-l", "paper_l"),
        ("Closed-Cube", "closed_cube"),
        ("moore", "closed_cube"),
        ("hexagonal", None),
        ("", None),
    ])
    def test_adjacency(self, raw, expected):
        assert normalize_adjacency(raw) == expected

    def test_law_kinds(self):
        assert normalize_law_kind("Geom") == "geometric"
        assert normalize_law_kind("det") == "deterministic"
        assert normalize_law_kind("pmf") == "table"
        assert normalize_law_kind("zipf") is None

    def test_experiment_names(self):
        known = ["survival", "gamma-supermartingale", "spine", "sbm-validate"]
        assert normalize_experiment("Survival", known) == "survival"
        assert normalize_experiment("gamma", known) == "gamma-supermartingale"
        assert normalize_experiment("sbm_validate", known) == "sbm-validate"
        # "s" matches several ids
        assert normalize_experiment("s", known) is None

    def test_suggest(self):
        assert "survival" in suggest("survivl", ["survival", "spine", "hitting"])


class TestSettings:
    def test_defaults(self):
        settings = get_settings()
        assert settings.threads == 1
        assert settings.population_cap == DEFAULT_POPULATION_CAP
        assert settings.quiet

    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("STRMLAB_THREADS", "6")
        monkeypatch.setenv("STRMLAB_POPULATION_CAP", "1e6")
        reset_settings()
        settings = get_settings()
        assert settings.threads == 6
        assert settings.population_cap == 1_000_000


class TestErrors:
    @pytest.mark.parametrize("cls, code", [
        (ConfigError, 2),
        (DomainError, 2),
        (InvalidLawError, 2),
        (RegimeError, 2),
        (AcceptanceFailure, 4),
        (InvariantViolation, 4),
    ])
    def test_exit_codes(self, cls, code):
        assert cls("boom").exit_code == code

    def test_resource_limit(self):
        err = ResourceLimitError("population at level 3", 2_000, 1_000)
        assert err.exit_code == 3
        assert err.to_dict()["details"] == {"what": "population at level 3", "size": 2_000, "cap": 1_000}
