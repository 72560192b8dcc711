"""Layered configuration resolution and provenance."""

import pytest

from skillsim.config import ConfigError, load_run_config


def test_defaults_resolve():
    cfg = load_run_config()
    assert cfg["perception.leaf"] == 0.01
    assert cfg["learner.epochs"] == 1000
    assert all(src == "default" for src in cfg.provenance.values())


def test_file_then_flag_layering(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nperception.leaf = 0.02\nlearner.epochs = 50\n")
    cfg = load_run_config(path, overrides=["learner.epochs=7"])
    assert cfg["perception.leaf"] == 0.02
    assert cfg.provenance["perception.leaf"] == "file"
    assert cfg["learner.epochs"] == 7
    assert cfg.provenance["learner.epochs"] == "flag"
    assert cfg.provenance["learner.lr"] == "default"


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("nonsense.key = 3\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        load_run_config(path)
    with pytest.raises(ConfigError, match="unknown config key"):
        load_run_config(overrides=["nope=1"])


def test_bad_value_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        load_run_config(overrides=["learner.epochs=zero"])
    with pytest.raises(ConfigError, match="bad value"):
        load_run_config(overrides=["learner.epochs=0"])
    with pytest.raises(ConfigError, match="bad value"):
        load_run_config(overrides=["expert.yaw_jitter=sometimes"])


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.cfg")


def test_derived_param_objects():
    cfg = load_run_config(overrides=["perception.k_neighbors=5",
                                     "expert.standoff_m=0.6",
                                     "learner.latent=16"])
    assert cfg.perception_params().k_neighbors == 5
    expert = cfg.expert_params()
    assert expert.standoff_m == 0.6
    assert expert.perception.k_neighbors == 5
    train = cfg.train_config(seed=4)
    assert train.latent == 16
    assert train.seed == 4


def test_describe_carries_provenance():
    cfg = load_run_config(overrides=["eval.max_steps=50"])
    desc = cfg.describe()
    assert desc["eval.max_steps"] == {"value": 50, "source": "flag"}
