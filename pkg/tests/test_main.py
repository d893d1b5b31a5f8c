import json
import os

import pytest

from config_loader import CONFIG_DIR, load_config
from main import build_parser, cmd_dressed_rates, main
from tools.sweep_tools import SweepRunner

QUICK = os.path.join(CONFIG_DIR, "quick_config.json")


def _run(tmp_path, monkeypatch, *argv):
    monkeypatch.chdir(tmp_path)
    return main([*argv, "--out", str(tmp_path / "out"), "--no-banner", "--workers", "1"])


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["figure-9"])


def test_parser_options():
    args = build_parser().parse_args(["regression", "--only", "1", "7", "--na-max", "4", "--dt", "0.05"])
    assert args.only == [1, 7]
    assert args.na_max == 4
    assert args.dt == 0.05
    assert args.nb_max is None


def test_appendix_writes_outputs(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "appendix", "--config", QUICK) == 0
    csv_path = tmp_path / "out" / "appendix.csv"
    with open(csv_path, encoding="utf-8") as f:
        assert f.readline().startswith("# units: Delta_t_ns=ns")
    with open(tmp_path / "out" / "appendix_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["error"] is None
    assert summary["headline"]["max_deviation_6us"]["within"] is True
    assert summary["metadata"]["workers"] == 1


def test_missing_config_exit_code(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "appendix", "--config", str(tmp_path / "missing.json")) == 2


def test_regression_subset_passes(tmp_path, monkeypatch):
    assert _run(tmp_path, monkeypatch, "regression", "--only", "1", "7") == 0
    with open(tmp_path / "out" / "regression_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert [c["id"] for c in summary["metadata"]["checks"]] == [1, 7]


def test_regression_failure_exit_code(tmp_path, monkeypatch):
    # другая связь g_a сдвигает точку согласования далеко от опорной
    config = tmp_path / "shifted.json"
    config.write_text(json.dumps({"device": {"g_a": 0.6}}), encoding="utf-8")
    assert _run(tmp_path, monkeypatch, "regression", "--config", str(config), "--only", "2") == 4
    with open(tmp_path / "out" / "regression_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["error"]["type"] == "RegressionFailure"
    assert summary["error"]["details"]["failed"] == [2]


def test_config_help_names_defaults():
    help_text = build_parser().format_help()
    assert "reference_defaults.json" in help_text
    assert "quick_config.json" in help_text


def test_csv_independent_of_worker_count(tmp_path):
    contents = []
    for workers in (1, 2):
        config = load_config(QUICK, out=str(tmp_path / f"w{workers}"))
        cmd_dressed_rates(config, SweepRunner(workers))
        contents.append((tmp_path / f"w{workers}" / "dressed_rates.csv").read_bytes())
    assert contents[0] == contents[1]
