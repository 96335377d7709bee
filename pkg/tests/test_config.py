import pytest

from cssl_har import config as cfgmod
from cssl_har.config import ConfigError, ExperimentConfig
from cssl_har.continual import LambdaSchedule

from conftest import TINY_INI


def test_defaults_follow_reference_setup():
    cfg = ExperimentConfig()
    assert cfg.model.filters == (32, 64, 96) and cfg.model.kernels == (24, 16, 8)
    assert cfg.model.dropout == 0.1 and cfg.model.projection_dim == 64
    assert cfg.run.replay_fraction == 0.01
    assert cfg.data.window_length == 384
    assert cfg.train.augment is cfg.augment


def test_loads_typed_values():
    cfg = cfgmod.loads(TINY_INI + "\n[augment]\nrotation_enabled = false\n")
    assert cfg.data.n_classes == 6 and isinstance(cfg.data.n_classes, int)
    assert cfg.model.filters == (4, 6)
    assert cfg.train.mode == "no_distill"
    assert cfg.augment.rotation_enabled is False and cfg.train.augment.rotation_enabled is False


def test_lambda_alias_and_round_trip():
    cfg = cfgmod.loads("[train]\nlambda = 0.5+0.25\nmode = kaizen\n")
    assert cfg.train.schedule == LambdaSchedule(0.5, 0.25)
    again = cfgmod.loads(cfgmod.dumps(cfg))
    assert cfgmod.dumps(again) == cfgmod.dumps(cfg)
    assert "lambda = 0.5+0.25" in cfgmod.dumps(cfg)


def test_dump_is_lossless_for_floats():
    cfg = cfgmod.override(ExperimentConfig(), {"train.learning_rate": 1 / 3, "train.schedule": LambdaSchedule(1 / 3, 0.1)})
    back = cfgmod.loads(cfgmod.dumps(cfg))
    assert back.train.learning_rate == 1 / 3 and back.train.schedule == LambdaSchedule(1 / 3, 0.1)


@pytest.mark.parametrize("text", [
    "[nope]\na = 1\n",
    "[data]\nwindows = 3\n",
    "[data]\nn_classes = many\n",
    "[train]\nmode = finetune\n",
    "[train]\nlambda = big\n",
    "[augment]\nwarp_knots = 1\n",
    "[augment]\nrotation_enabled = maybe\n",
    "[train]\naugment = x\n",
    "not an ini",
])
def test_bad_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        cfgmod.loads(text)


def test_override_and_errors():
    cfg = cfgmod.override(ExperimentConfig(), {"train.mode": "cassle", "run.seed": "4", "train.lambda": "2.5+0"})
    assert (cfg.train.mode, cfg.run.seed, cfg.train.schedule) == ("cassle", 4, LambdaSchedule(2.5, 0.0))
    assert cfg.run_id() == "cassle-byol-l2.50+0.00-s4"
    with pytest.raises(ConfigError):
        cfgmod.override(cfg, {"train.bogus": 1})
    with pytest.raises(ConfigError):
        cfgmod.override(cfg, {"bogus.mode": 1})
    with pytest.raises(ConfigError):
        cfgmod.override(cfg, {"train.mode": "nope"})


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "absent.ini")
