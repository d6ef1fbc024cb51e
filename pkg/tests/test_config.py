import json

import pytest

from turingpinn.config import ConfigError, WorkbenchConfig, dump_config, env_overrides, load_config


def test_defaults():
    cfg = load_config(environ={})
    assert cfg == WorkbenchConfig()
    assert (cfg.seed, cfg.n_restarts, cfg.output_dir, cfg.matrix) == (0, 8, "runs", "baseline")


def test_dump_and_reload_round_trip(tmp_path):
    cfg = WorkbenchConfig().with_overrides(seed=5, epochs=40, n_restarts=3)
    path = tmp_path / "c.json"
    path.write_text(dump_config(cfg))
    assert load_config(path, environ={}) == cfg


def test_precedence_flag_over_env_over_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 1, "n_restarts": 2, "output_dir": "file", "training": {"epochs": 30}}))
    env = {"TURINGPINN_SEED": "7", "TURINGPINN_EPOCHS": "50"}
    cfg = load_config(path, {"seed": 9, "output_dir": None}, environ=env)
    assert cfg.seed == 9               # flag
    assert cfg.training.epochs == 50   # environment
    assert cfg.n_restarts == 2         # file
    assert cfg.output_dir == "file"    # None flag means unset


def test_partial_sections_keep_other_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"grid": {"nx": 20, "ny": 20}}))
    cfg = load_config(path, environ={})
    assert cfg.grid.nx == 20 and cfg.grid.x_max == WorkbenchConfig().grid.x_max


@pytest.mark.parametrize("body,match", [
    ({"colour": 1}, "colour"),
    ({"training": {"epoch": 5}}, "epoch"),
    ({"training": {"epochs": 0}}, "training"),
    ({"n_restarts": 0}, "n_restarts"),
    ({"matrix": "huge"}, "matrix"),
    ([1, 2], "object"),
])
def test_bad_config_is_rejected(tmp_path, body, match):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(body))
    with pytest.raises(ConfigError, match=match):
        load_config(path, environ={})


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad, environ={})
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json", environ={})


def test_env_values_are_typed():
    assert env_overrides({"TURINGPINN_WORKERS": "3", "TURINGPINN_OUT": "x"}) == {"workers": 3, "output_dir": "x"}
    with pytest.raises(ConfigError, match="TURINGPINN_SEED"):
        env_overrides({"TURINGPINN_SEED": "abc"})
