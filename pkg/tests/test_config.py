import json

import pytest

from src.experiments.config import DEFAULT_SEED, build_config, read_config_file
from src.tools.laws import OffspringKind
from src.utils.errors import ConfigError


def test_defaults_then_file_then_flags():
    config = build_config(
        "survival",
        defaults={"replicates": 10_000, "levels": 8, "options": {"a": 1, "b": 2}},
        file_values={"levels": 5, "options": {"b": 3}},
        overrides={"levels": 4, "seed": None, "replicates": 7},
    )
    assert config.levels == 4
    assert config.replicates == 7
    assert config.seed == DEFAULT_SEED
    assert config.options == {"a": 1, "b": 3}


def test_law_and_adjacency_aliases():
    config = build_config("x", file_values={"offspring": {"kind": "geom", "mean": 3}, "adjacency": "Closed-Cube"})
    assert config.law().kind == OffspringKind.GEOMETRIC
    assert config.adjacency == "closed_cube"


@pytest.mark.parametrize("values", [
    {"offspring": {"kind": "zipf", "mean": 2}},
    {"offspring": {"kind": "poisson", "mean": -1}},
    {"offspring": {"kind": "table", "probs": [0.5, 0.4]}},
    {"adjacency": "hexagonal"},
    {"d": 2, "axis": 2},
    {"B": 1},
    {"replicates": -1},
    {"sweep": [0.5]},
    {"cases": [{"label": "a"}, {"label": "a"}]},
    {"levels": "many"},
    {"unknown_field": 1},
])
def test_invalid_configurations(values):
    with pytest.raises(ConfigError) as info:
        build_config("survival", file_values=values)
    assert info.value.exit_code == 2
    assert "survival" in info.value.message


def test_case_params_inherit():
    config = build_config("x", file_values={"d": 3, "cases": [{"label": "flat", "d": 2}, {"label": "deep", "levels": 12}]})
    flat, deep = config.cases
    assert config.case_params(flat).d == 2
    assert config.case_params(deep).d == 3
    assert config.case_levels(deep) == 12
    assert config.case_levels(flat) == config.levels


def test_hash_ignores_threads_and_output_dir(tmp_path):
    a = build_config("x", overrides={"threads": 1, "output_dir": tmp_path / "a"})
    b = build_config("x", overrides={"threads": 8, "output_dir": tmp_path / "b"})
    c = build_config("x", overrides={"seed": 1})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_read_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 3}))
    assert read_config_file(path) == {"seed": 3}

    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.json")

    path.write_text("{not json")
    with pytest.raises(ConfigError):
        read_config_file(path)

    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        read_config_file(path)
