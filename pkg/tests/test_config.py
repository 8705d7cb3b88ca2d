import json
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from ChandraMCC.config import BENCHMARK_MAGNITUDES, DEFAULT_FILTERS, ConfigManager
from ChandraMCC.core import FilterSpec
from ChandraMCC.exceptions import ConfigurationError
from ChandraMCC.filters import ADAPTIVE_LAMBDA, KernelStrategy
from ChandraMCC.statespace import ShotNoiseSpec, save_model

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "example1.json"


@pytest.fixture
def config_manager():
    return ConfigManager()


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_defaults(config_manager):
    assert config_manager.N == 300
    assert config_manager.runs == 500
    assert config_manager.q4 == 0.63e-2
    assert config_manager.pi0_label == "benchmark"
    assert config_manager.shot == ShotNoiseSpec(magnitudes=BENCHMARK_MAGNITUDES)
    assert config_manager.protocol == "published"
    assert [f.name for f in config_manager.filters] == list(DEFAULT_FILTERS)
    assert config_manager.constant_lambda() == ADAPTIVE_LAMBDA


def test_example_config_matches_defaults(config_manager):
    config_manager.load_config(EXAMPLE)
    assert config_manager.to_json() == ConfigManager().to_json()
    assert config_manager.config_file == str(EXAMPLE)


def test_load_config_values(config_manager, tmp_path):
    path = _write(
        tmp_path,
        {
            "model": {"preset": "satellite", "q4": 0.63e-4, "pi0": "zero"},
            "shot": {"corrupt_fraction": 0.2, "targets": "measurement"},
            "runs": 20,
            "filters": ["kf", {"name": "alg3", "lambda": 0.5}],
            "timing_repeats": 3,
        },
    )
    config_manager.load_config(path)
    assert config_manager.q4 == 0.63e-4
    assert config_manager.runs == 20
    assert config_manager.shot.targets == "measurement"
    assert config_manager.shot.magnitudes == BENCHMARK_MAGNITUDES
    assert config_manager.filters[1] == FilterSpec("alg3", KernelStrategy.constant(0.5))
    assert config_manager.timing_repeats == 3
    model = config_manager.build_model()
    np.testing.assert_array_equal(model.Pi0, 0.0)
    assert model.Q[3, 3] == 0.63e-4


@pytest.mark.parametrize(
    "data",
    [
        {"mystery": 1},
        {"runs": "many"},
        {"runs": True},
        {"model": {"preset": "pendulum"}},
        {"model": {"preset": "satellite", "pi0": "unit"}},
        {"model": {"preset": "satellite", "q4": -1.0}},
        {"model": 3},
        {"shot": {"ratio": 0.1}},
        {"shot": [0.1]},
        {"filters": []},
        {"filters": ["alg9"]},
        {"protocol": "lagged"},
    ],
)
def test_load_config_rejects(config_manager, tmp_path, data):
    with pytest.raises(ConfigurationError):
        config_manager.load_config(_write(tmp_path, data))


def test_load_config_missing_or_broken(config_manager, tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        config_manager.load_config(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigurationError, match="parsing"):
        config_manager.load_config(broken)


def test_model_file_relative_to_config(config_manager, tmp_path, make_random_model):
    model = make_random_model(1)
    save_model(model, tmp_path / "model.json")
    config_manager.load_config(_write(tmp_path, {"model": "model.json"}))
    assert config_manager.q4 is None
    assert config_manager.pi0_label == "custom"
    np.testing.assert_array_equal(config_manager.build_model().F, model.F)


def test_inline_model(config_manager, tmp_path):
    inline = {
        "F": [[1.0]],
        "G": [[1.0]],
        "H": [[1.0]],
        "Q": [[0.5]],
        "R": [[2.0]],
        "x0_mean": [[0.0]],
        "Pi0": [[1.0]],
    }
    config_manager.load_config(_write(tmp_path, {"model": inline}))
    assert config_manager.build_model().R[0, 0] == 2.0
    del inline["Pi0"]
    config_manager.load_config(_write(tmp_path, {"model": inline}))
    with pytest.raises(ConfigurationError, match="inline model"):
        config_manager.build_model()


def test_overrides(config_manager):
    config_manager.apply_overrides(
        {"seed": 7, "runs": 50, "q4": 0.63e-4, "pi0": "zero", "lambda": "0.5", "sigma": None}
    )
    assert config_manager.seed == 7
    assert config_manager.runs == 50
    assert config_manager.q4 == 0.63e-4
    assert config_manager.pi0_label == "zero"
    assert config_manager.filters[0] == FilterSpec("kf")
    assert all(f.strategy == KernelStrategy.constant(0.5) for f in config_manager.filters[1:])
    assert config_manager.constant_lambda() == 0.5


def test_filter_override_keeps_configured_strategy(config_manager):
    config_manager.filters = [FilterSpec("alg2", KernelStrategy.constant(0.3))]
    config_manager.apply_overrides({"filters": ["alg2", "alg4"]})
    assert config_manager.filters == [
        FilterSpec("alg2", KernelStrategy.constant(0.3)),
        FilterSpec("alg4"),
    ]


def test_sigma_override_rejected_for_chandrasekhar(config_manager):
    with pytest.raises(ConfigurationError):
        config_manager.apply_overrides({"sigma": 2.0})
    config_manager.apply_overrides({"filters": ["imcc-riccati"], "sigma": 2.0})
    assert config_manager.filters[0].strategy == KernelStrategy.fixed_sigma(2.0)


@pytest.mark.parametrize(
    "overrides",
    [
        {"colour": "red"},
        {"lambda": "big"},
        {"lambda": -1},
        {"lambda": 0.5, "sigma": 1.0},
        {"pi0": "unit"},
        {"protocol": "shifted"},
        {"filters": []},
    ],
)
def test_overrides_rejected(config_manager, overrides):
    with pytest.raises(ConfigurationError):
        config_manager.apply_overrides(overrides)


def test_protocol_reaches_experiment_config(config_manager):
    config_manager.apply_overrides({"protocol": "nominal"})
    cfg = config_manager.to_experiment_config()
    assert cfg.protocol == "nominal"
    assert cfg.shot.magnitudes == BENCHMARK_MAGNITUDES
    assert config_manager.to_json()["protocol"] == "nominal"


def test_preset_overrides_need_preset(config_manager):
    config_manager.model_config = "model.json"
    with pytest.raises(ConfigurationError, match="preset"):
        config_manager.apply_overrides({"q4": 0.1})


def test_steady_prior_uses_configured_lambda(config_manager):
    config_manager.model_config = {"preset": "satellite", "q4": 0.63e-2, "pi0": "steady"}
    config_manager.apply_overrides({"lambda": "0.5"})
    with patch("ChandraMCC.config.steady_state_covariance", return_value=np.eye(4)) as ss:
        model = config_manager.build_model()
    assert ss.call_args.args[1] == 0.5
    np.testing.assert_array_equal(model.Pi0, np.eye(4))
    assert config_manager.pi0_label == "steady"


def test_save_and_reload(config_manager, tmp_path):
    config_manager.apply_overrides({"runs": 12, "filters": ["alg1"], "lambda": "0.8"})
    path = tmp_path / "out" / "saved.json"
    config_manager.save_config(path)
    reloaded = ConfigManager(str(path))
    assert reloaded.to_json() == config_manager.to_json()
    assert reloaded.config_file == str(path)


def test_experiment_config(config_manager):
    config_manager.apply_overrides({"runs": 3, "pi0": "zero"})
    cfg = config_manager.to_experiment_config()
    assert cfg.runs == 3
    assert cfg.pi0_label == "zero"
    assert cfg.q4 == 0.63e-2
    assert len(cfg.filters) == 6
