import json
import os

import pytest
from pytest import mark

from run_all import EXIT_CONFIG, EXIT_OK, main
from scripts.config import DEFAULT_PERIODS_US, ExperimentConfig, load_config
from sim_modules.errors import ConfigError

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "default.json")


def _write(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def test_defaults_validate():
    config = load_config()
    assert config.hop.hop_interval_us == (5000, 1000)
    assert config.channel.n_channels == 128
    assert config.eve.detection_period_us == DEFAULT_PERIODS_US
    assert config.jam.phase_us == 0


def test_shipped_config_matches_defaults():
    config = load_config(DEFAULT_CONFIG)
    defaults = ExperimentConfig().validate()
    assert config.to_dict() == defaults.to_dict()


def test_lists_become_tuples(tmp_path):
    config = load_config(_write(tmp_path, {"hop": {"hop_interval_us": [2500]}, "trials": 3}))
    assert config.hop.hop_interval_us == (2500,)
    assert config.trials == 3


@mark.parametrize("data", [
    {"colour": 1},
    {"hop": {"hop_intervals": [5000]}},
    {"hop": [5000]},
    {"hop": {"hop_interval_us": [1200]}},
    {"hop": {"hop_interval_us": []}},
    {"eve": {"detection_period_us": [0, 1000]}},
    {"jam": {"strategy": "smart"}},
    {"jam": {"phase_us": -1}},
    {"qkd": {"flip_prob": 2.0}},
    {"kms": {"record_size_bits": 100}},
    {"ideal_trials": 500},
    {"trials": 0},
    [1, 2, 3],
])
def test_invalid_configs_are_rejected(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, data))


def test_unreadable_configs(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "{not json"))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_overrides():
    config = load_config().with_overrides(out="elsewhere", seed=9, trials=4, parallel=2)
    assert config.output_dir == "elsewhere"
    assert config.master_seed == 9
    assert config.trials == 4
    assert config.parallel == 2
    # the QKD seed is fanned out from the master seed, not replaced by it
    assert config.qkd.seed == 0
    with pytest.raises(ConfigError):
        load_config().with_overrides(trials=0)


def test_cli_validate_exit_codes(tmp_path):
    assert main(["validate"]) == EXIT_OK
    assert main(["config", "validate", "--config", DEFAULT_CONFIG]) == EXIT_OK
    bad = _write(tmp_path, {"hop": {"hop_interval_us": [1200]}})
    assert main(["validate", "--config", bad]) == EXIT_CONFIG


@mark.parametrize("argv", [
    ["simulate", "--mode", "eve", "--period", "1000", "--phase", "5000", "--hops", "50"],
    ["simulate", "--mode", "jam", "--period", "1000", "--phase", "1000", "--hops", "50"],
    ["simulate", "--mode", "link", "--hop-interval", "1200", "--hops", "50"],
])
def test_cli_out_of_range_arguments_are_config_errors(argv):
    assert main(argv) == EXIT_CONFIG


def test_cli_simulate_in_range_succeeds():
    assert main(["simulate", "--mode", "eve", "--period", "1000", "--phase", "500", "--hops", "50"]) == EXIT_OK
