import json

import numpy as np
import pytest

from magspec.config import parse_config, parse_config_data
from magspec.errors import ConfigError


def _minimal_bands():
    return {
        "experiment": "bands",
        "model": {"preset": "free", "d": 1, "L": 8},
        "params": {"theta_resolution": 8},
    }


def test_minimal_config_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(_minimal_bands()))
    cfg = parse_config(path)
    assert cfg.experiment == "bands"
    assert cfg.ensemble_size == 1
    # re-serialization reproduces every field
    again = parse_config_data(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.canonical_json() == cfg.canonical_json()


def test_unknown_key_named():
    data = _minimal_bands()
    data["model"]["lamda"] = 0.1
    with pytest.raises(ConfigError) as err:
        parse_config_data(data)
    assert "lamda" in str(err.value)
    assert "model" in str(err.value)


def test_unknown_param_named():
    data = _minimal_bands()
    data["params"]["wibble"] = 3
    with pytest.raises(ConfigError) as err:
        parse_config_data(data)
    assert "params.wibble" in str(err.value)


def test_missing_required_named():
    data = {
        "experiment": "wegner",
        "model": {"preset": "lattice_random", "eps": 1.0, "u_scale": 2.0},
        "params": {"lambda": 0.1, "e0": "midgap", "sides": [16]},
    }
    with pytest.raises(ConfigError) as err:
        parse_config_data(data)
    assert "params.etas" in str(err.value)


def test_unknown_experiment():
    data = _minimal_bands()
    data["experiment"] = "frobnicate"
    with pytest.raises(ConfigError):
        parse_config_data(data)


def test_negative_lambda_rejected():
    data = {
        "experiment": "ids",
        "model": {"preset": "free", "d": 1, "L": 8},
        "params": {"lambda": -0.5},
    }
    with pytest.raises(ConfigError):
        parse_config_data(data)


def test_type_errors_are_addressed():
    data = _minimal_bands()
    data["compute"] = {"ensemble_size": "ten"}
    with pytest.raises(ConfigError) as err:
        parse_config_data(data)
    assert "compute.ensemble_size" in str(err.value)


def test_bool_is_not_a_number():
    data = {
        "experiment": "ids",
        "model": {"preset": "free", "d": 1, "L": 8},
        "params": {"lambda": True},
    }
    with pytest.raises(ConfigError):
        parse_config_data(data)


def test_json_syntax_error_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"experiment": "bands",,}')
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert ":1:" in str(err.value)


def test_file_model_config(tmp_path):
    from magspec.geometry import LatticeGeometry
    from magspec.gridfile import write_cell_file

    g = LatticeGeometry(2, (8, 8), spacing=1.0, cell=(4, 4))
    cells = tmp_path / "cells.txt"
    write_cell_file(cells, g, {"V0": np.zeros((4, 4))})
    data = {
        "experiment": "ids",
        "model": {
            "geometry": {"dimension": 2, "sides": [8, 8], "spacing": 1.0, "cell": [4, 4]},
            "background": str(cells),
            "disorder": {"distribution": ["uniform", -1, 1]},
        },
        "params": {"lambda": 0.0},
    }
    cfg = parse_config_data(data)
    assert cfg.model.background_file == str(cells)
    from magspec.runner import build_model

    model = build_model(cfg)
    assert model.geometry.sides == (8, 8)


def test_wrong_grid_size_in_referenced_file(tmp_path):
    from magspec.geometry import LatticeGeometry
    from magspec.gridfile import write_cell_file

    g_small = LatticeGeometry(2, (4, 4), spacing=1.0, cell=(2, 2))
    cells = tmp_path / "cells.txt"
    write_cell_file(cells, g_small, {"V0": np.zeros((2, 2))})
    data = {
        "experiment": "ids",
        "model": {
            "geometry": {"dimension": 2, "sides": [8, 8], "spacing": 1.0, "cell": [4, 4]},
            "background": str(cells),
        },
        "params": {"lambda": 0.0},
    }
    cfg = parse_config_data(data)
    from magspec.runner import build_model

    with pytest.raises(ConfigError) as err:
        build_model(cfg)
    assert "(2, 2)" in str(err.value) and "(4, 4)" in str(err.value)
