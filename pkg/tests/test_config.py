import pytest

from topdown.config import (
    ConfigError, TrainConfig, coerce, load_config_file, parse_config_text, profile_config, resolve_config,
)


def test_parse_text():
    vals = parse_config_text("# comment\nbatch_size = 8\nencoder=capsule  # trailing\n\nuse-drift = yes\n")
    assert vals == {"batch_size": "8", "encoder": "capsule", "use_drift": "yes"}
    with pytest.raises(ConfigError):
        parse_config_text("nonsense line")


def test_coerce_types():
    assert coerce("batch_size", "8") == 8
    assert coerce("lr_g", "0.5") == 0.5
    assert coerce("use_drift", "on") is True
    with pytest.raises(ConfigError):
        coerce("use_drift", "maybe")
    with pytest.raises(ConfigError):
        coerce("nope", "1")
    with pytest.raises(ConfigError):
        coerce("batch_size", "x")


def test_precedence():
    cfg = resolve_config({"batch_size": "8", "encoder": "conv3d", "profile": "desk"},
                         {"batch_size": 4, "seed": None})
    assert cfg.batch_size == 4          # CLI beats file
    assert cfg.encoder == "conv3d"      # file beats defaults
    assert cfg.final_scale == 32        # profile beats defaults
    assert resolve_config({}, {}).profile == "paper"
    assert resolve_config({"final_scale": "16"}, {}, profile="desk").final_scale == 16


def test_validation():
    with pytest.raises(ConfigError):
        resolve_config({}, {"encoder": "vgg"})
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(final_scale=48).validate()
    with pytest.raises(ConfigError):
        profile_config("laptop")


def test_load_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("seed = 5\n")
    assert load_config_file(p) == {"seed": "5"}
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.txt")
