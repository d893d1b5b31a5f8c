import json
import os

import pytest

from config_loader import CONFIG_DIR, apply_overrides, deep_merge, load_config, load_document
from core_model import operating_probe
from simulation_errors import ConfigError

QUICK = os.path.join(CONFIG_DIR, "quick_config.json")


def _write_json(path, document):
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def test_defaults_load():
    config = load_config()
    assert len(config.grids.rates_Omega_d) == 61
    assert config.grids.rates_Omega_d[0] == 0.0
    assert config.grids.rates_Omega_d[-1] == pytest.approx(30.0)
    assert config.drive.Omega_d is None
    assert config.drive.omega_d == 4.832
    assert config.run.workers is None


def test_default_probe_sits_on_operating_frequency():
    config = load_config()
    dp = config.dispersive()
    assert config.probe_spec().omega_p == pytest.approx(operating_probe(dp).omega_p)
    assert config.probe_spec(0.0).n_b_mean == 0.0
    assert config.drive_spec().Omega_d == 0.0
    assert config.drive_spec(10.75).Omega_d == 10.75


def test_quick_config_overlays_defaults():
    config = load_config(QUICK)
    assert config.run.workers == 2
    assert config.grids.map_Omega_d == [0.0, 10.75, 20.0]
    assert len(config.grids.appendix_Delta_t) == 50
    # устройство берется из значений по умолчанию
    assert config.device.kappa_b == 46.0
    assert config.source == QUICK


def test_missing_file():
    with pytest.raises(ConfigError) as exc_info:
        load_config("/nonexistent/config.json")
    assert exc_info.value.exit_code == 2


def test_unknown_key_rejected(tmp_path):
    path = _write_json(tmp_path / "bad.json", {"drive": {"omega_d": 4.832, "power": 1.0}})
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert "drive" in exc_info.value.message


def test_record_step_smaller_than_dt(tmp_path):
    path = _write_json(tmp_path / "step.json", {"integrator": {"dt": 2.0}})
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert "integrator" in exc_info.value.message


def test_negative_rate_rejected(tmp_path):
    path = _write_json(tmp_path / "rate.json", {"device": {"kappa_a": -1.0}})
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_match_bracket(tmp_path):
    path = _write_json(tmp_path / "bracket.json", {"drive": {"match_bracket": [5.0, 1.0]}})
    with pytest.raises(ConfigError):
        load_config(path)


def test_yaml_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("drive:\n  omega_d: 4.841\n  Omega_d: 17.27\nprobe:\n  n_b_mean: 0.025\n"
                    "grids:\n  lengths: [60, 90]\n", encoding="utf-8")
    config = load_config(str(path))
    assert config.drive.omega_d == 4.841
    assert config.drive.Omega_d == 17.27
    assert config.probe.n_b_mean == 0.025
    assert config.grids.lengths == [60.0, 90.0]
    assert config.drive.band_drives == [4.832, 4.841, 4.850]


def test_broken_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("drive: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_document(str(path))


def test_deep_merge_replaces_linspace_axes():
    base = {"grids": {"n_b": [0.0], "lengths": {"start": 1, "stop": 2, "num": 3}}, "run": {"out": "a"}}
    update = {"grids": {"lengths": {"start": 10, "stop": 20, "num": 2}}}
    merged = deep_merge(base, update)
    assert merged["grids"]["lengths"] == {"start": 10, "stop": 20, "num": 2}
    assert merged["grids"]["n_b"] == [0.0]
    assert base["grids"]["lengths"]["num"] == 3


def test_deep_merge_linspace_over_list():
    merged = deep_merge({"grids": {"n_b": [0.0, 0.05]}}, {"grids": {"n_b": {"start": 0, "stop": 1, "num": 2}}})
    assert merged["grids"]["n_b"] == {"start": 0, "stop": 1, "num": 2}


def test_command_line_overrides(tmp_path):
    config = load_config(out=str(tmp_path), workers=3, na_max=4, nb_max=2, dt=0.05, level="DEBUG")
    assert config.run.out == str(tmp_path)
    assert config.run.workers == 3
    assert config.device.n_a_max == 4
    assert config.device.n_b_max == 2
    assert config.integrator.dt == 0.05
    assert config.logging.level == "DEBUG"


def test_overrides_leave_unset_fields():
    document = {"run": {"out": "results", "workers": None}}
    assert apply_overrides(document) == document
    assert apply_overrides(document, workers=1)["run"] == {"out": "results", "workers": 1}


def test_config_is_frozen():
    config = load_config()
    with pytest.raises(Exception):
        config.drive.omega_d = 4.9
