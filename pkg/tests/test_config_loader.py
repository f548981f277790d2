import io

import pytest

from core.config_loader import (ConfigLoader, get_config_loader, merge_settings, parse_grid,
                                parse_int_list, parse_model, reset_config_loader)
from core.environment import Bernoulli, FiniteDiscrete, Gaussian
from core.errors import ModelError


@pytest.fixture
def project(tmp_path):
    (tmp_path / "experiments").mkdir()
    (tmp_path / "experiments" / "small.yaml").write_text(
        "kind: free-energy\nmodel: bernoulli:0.5\nbeta: [0.0, 1.0]\nn: [4]\nM: 3\n", encoding="utf-8")
    (tmp_path / "experiments" / "broken.yaml").write_text("kind: [unclosed\n", encoding="utf-8")
    (tmp_path / "experiments" / "nokind.yaml").write_text("model: bernoulli:0.5\n", encoding="utf-8")
    return tmp_path


def test_defaults_when_settings_missing(tmp_path):
    loader = ConfigLoader(str(tmp_path))
    assert loader.load_settings() is False
    assert loader.settings["defaults"]["master_seed"] == 20240917
    assert loader.settings["verify_suite"]["cases"] == 20


def test_settings_override_defaults(tmp_path):
    (tmp_path / "settings.yaml").write_text("defaults:\n  workers: 4\nlogging:\n  level: DEBUG\n",
                                            encoding="utf-8")
    loader = ConfigLoader(str(tmp_path))
    assert loader.load_settings() is True
    assert loader.settings["defaults"]["workers"] == 4
    assert loader.settings["defaults"]["exact_bits"] == 127
    assert loader.settings["logging"]["level"] == "DEBUG"


def test_scan_skips_invalid_presets(project):
    loader = ConfigLoader(str(project))
    presets = loader.scan_experiments()
    assert sorted(presets) == ["small"]
    preset = loader.get_experiment("small")
    preset["M"] = 99
    assert loader.get_experiment("small")["M"] == 3


def test_load_experiment_sources(project, monkeypatch):
    loader = ConfigLoader(str(project))
    assert loader.load_experiment("small")["kind"] == "free-energy"
    path = project / "experiments" / "small.yaml"
    assert loader.load_experiment(str(path))["n"] == [4]
    assert loader.load_experiment("missing") is None
    monkeypatch.setattr("sys.stdin", io.StringIO('{"kind": "verify", "seed": 3}'))
    assert loader.load_experiment("-") == {"kind": "verify", "seed": 3}
    assert loader.load_text("- just\n- a list\n") is None


def test_validate_required_fields(tmp_path):
    loader = ConfigLoader(str(tmp_path))
    assert loader.validate_required_fields({"kind": "x"}, ["kind", "model"], "cfg") == ["model"]
    assert loader.validate_path("out") == (tmp_path / "out").resolve()


def test_merge_settings_is_recursive():
    merged = merge_settings({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"c": 5}, "e": 6})
    assert merged == {"a": {"b": 1, "c": 5}, "d": 3, "e": 6}


def test_parse_grid():
    assert parse_grid([0, 1.5]) == [0.0, 1.5]
    assert parse_grid(2) == [2.0]
    assert parse_grid(None) == []
    grid = parse_grid({"start": -3, "stop": 3, "step": 0.25})
    assert len(grid) == 25 and grid[0] == -3.0 and grid[-1] == 3.0 and 0.0 in grid
    for bad in ({"start": 1, "stop": 0, "step": 0.1}, {"start": 0, "stop": 1}, ["a"], "1,2"):
        with pytest.raises(ModelError):
            parse_grid(bad)


def test_parse_int_list():
    assert parse_int_list(8) == [8]
    assert parse_int_list([4, 8]) == [4, 8]
    with pytest.raises(ModelError):
        parse_int_list([4.5])
    with pytest.raises(ModelError):
        parse_int_list(True)


def test_parse_model_shorthand():
    assert isinstance(parse_model("bernoulli:0.3"), Bernoulli)
    gaussian = parse_model("gaussian:1,2")
    assert isinstance(gaussian, Gaussian) and gaussian.mean() == 1.0 and gaussian.variance == 2.0
    discrete = parse_model("discrete:-1,1:0.5,0.5")
    assert isinstance(discrete, FiniteDiscrete) and discrete.support() == (-1.0, 1.0)
    assert parse_model("constant:1").mean() == 1.0
    assert isinstance(parse_model({"kind": "bernoulli", "p": 0.5}), Bernoulli)
    for bad in ("bernoulli", "poisson:1", "gaussian:1", 3):
        with pytest.raises(ModelError):
            parse_model(bad)


def test_singleton():
    first = get_config_loader()
    assert get_config_loader() is first
    reset_config_loader()
    assert get_config_loader() is not first
