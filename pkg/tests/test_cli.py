import json

import pytest
from typer.testing import CliRunner

from src.experiments.suites import SUITE_FUNCTIONS, SuiteResult
from src.main import app

runner = CliRunner()


def test_list():
    result = runner.invoke(app, ["list"])
    assert result.exit_code == 0


def test_describe_prints_defaults():
    result = runner.invoke(app, ["describe", "gamma"])
    assert result.exit_code == 0
    assert '"ells"' in result.stdout


def test_unknown_experiment_exits_2():
    assert runner.invoke(app, ["run", "no-such-thing"]).exit_code == 2
    assert runner.invoke(app, ["describe", "no-such-thing"]).exit_code == 2


def test_exact_tables_command(tmp_path):
    result = runner.invoke(app, ["gw-exact-tables", "--out", str(tmp_path), "--seed", "7"])
    assert result.exit_code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "gw-exact-tables"
    assert summary["seed"] == 7
    assert summary["passed"] is True


def test_run_alias_with_zero_replicates(tmp_path):
    result = runner.invoke(app, ["run", "surv", "--replicates", "0", "--out", str(tmp_path)])
    assert result.exit_code == 0
    assert json.loads((tmp_path / "summary.json").read_text())["checks"] == []


def test_manifest_reruns_with_the_same_hash(tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert runner.invoke(app, ["survival", "--replicates", "0", "--seed", "11", "--out", str(first)]).exit_code == 0
    result = runner.invoke(app, ["survival", "--config", str(first / "manifest.json"), "--out", str(second)])
    assert result.exit_code == 0
    a = json.loads((first / "manifest.json").read_text())
    b = json.loads((second / "manifest.json").read_text())
    assert a["config_hash"] == b["config_hash"]
    assert b["seed"] == 11


@pytest.mark.parametrize("args", [
    ["survival", "--adjacency", "hexagonal"],
    ["survival", "--config", "does-not-exist.json"],
    ["coupling-containment", "--replicates", "-3"],
])
def test_configuration_errors_exit_2(args, tmp_path):
    assert runner.invoke(app, args + ["--out", str(tmp_path)]).exit_code == 2


def test_resource_cap_exits_3(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"population_cap": 10, "replicates": 2, "offspring": {"kind": "deterministic", "k": 4}}))
    result = runner.invoke(app, ["mean-measure", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == 3


def test_acceptance_failure_exits_4(tmp_path, monkeypatch):
    def failing(ctx):
        result = SuiteResult()
        result.check("always fails", False)
        return result

    monkeypatch.setitem(SUITE_FUNCTIONS, "survival", failing)
    result = runner.invoke(app, ["survival", "--replicates", "1", "--out", str(tmp_path)])
    assert result.exit_code == 4
    assert (tmp_path / "manifest.json").exists()
