"""Strict JSON experiment configurations.

Unknown keys are rejected with their JSON path; defaults are applied only
to compute-grade parameters and are reported back so the runner can log
them.  Physics-bearing parameters (λ, disorder law, grid spacing, probe
energies) must always be explicit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

_REQUIRED = object()

EXPERIMENT_KINDS = (
    "bands",
    "gh_certify",
    "ids",
    "lifshitz",
    "wegner",
    "kw",
    "decay",
    "feshbach_verify",
    "fh_check",
)

_NUMBER = (int, float)

# per-kind parameter schema: name -> (types, default)
_PARAM_SCHEMAS: dict[str, dict[str, tuple]] = {
    "bands": {
        "theta_resolution": (int, 16),
        "window": (list, None),
        "phases": (str, "peierls"),
    },
    "gh_certify": {
        "eps": (_NUMBER, _REQUIRED),
        "u_scale": (_NUMBER, 1.0),
        "meshes": (list, None),
        "theta_resolution": (int, 8),
    },
    "ids": {
        "lambda": (_NUMBER, _REQUIRED),
        "energy_min": (_NUMBER, None),
        "energy_max": (_NUMBER, None),
        "energy_points": (int, 512),
        "dump_eigenvalues": (bool, False),
    },
    "lifshitz": {
        "lambda": (_NUMBER, _REQUIRED),
        "edge_ensemble": (int, 12),
        "energy_points": (int, 700),
        "span_above": (_NUMBER, 0.5),
        "n_min": (int, 10),
    },
    "wegner": {
        "lambda": (_NUMBER, _REQUIRED),
        "e0": ((*_NUMBER, str), _REQUIRED),
        "etas": (list, _REQUIRED),
        "q": (_NUMBER, 2.0),
        "sides": (list, _REQUIRED),
    },
    "kw": {
        "lambda": (_NUMBER, _REQUIRED),
        "e0": ((*_NUMBER, str), _REQUIRED),
        "sides": (list, _REQUIRED),
    },
    "decay": {
        "lambda": (_NUMBER, _REQUIRED),
        "energy": ((*_NUMBER, str), _REQUIRED),
        "sides": (list, _REQUIRED),
        "width_fraction": (_NUMBER, 0.125),
    },
    "feshbach_verify": {
        "lambdas": (list, _REQUIRED),
        "e0": ((*_NUMBER, str), "midgap"),
        "n_instances": (int, 20),
        "fd_step": (_NUMBER, 1e-5),
    },
    "fh_check": {
        "lambda": (_NUMBER, _REQUIRED),
        "n_instances": (int, 10),
        "band_offset": (int, 0),
        "fd_step": (_NUMBER, 1e-5),
    },
}

_MODEL_PRESETS = {
    "lattice_random": {
        "L": (int, 16),
        "va": (_NUMBER, 8.0),
        "vb": (_NUMBER, 12.0),
        "eps": (_NUMBER, _REQUIRED),
        "u_scale": (_NUMBER, _REQUIRED),
    },
    "continuum_cosine": {
        "m": (int, 6),
        "va": (_NUMBER, 8.0),
        "vb": (_NUMBER, 12.0),
    },
    "chain": {
        "L": (int, 64),
        "v": (_NUMBER, 3.0),
    },
    "free": {
        "d": (int, 2),
        "L": (int, 16),
        "spacing": (_NUMBER, 1.0),
    },
}


@dataclass
class ModelConfig:
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    geometry: dict | None = None
    background_file: str | None = None
    profile_file: str | None = None
    eps: float = 0.0
    disorder: dict | None = None

    def to_dict(self) -> dict:
        if self.preset is not None:
            return {"preset": self.preset, **self.preset_params}
        out: dict = {"geometry": self.geometry, "background": self.background_file}
        if self.profile_file is not None:
            out["profile"] = self.profile_file
        if self.eps:
            out["eps"] = self.eps
        if self.disorder is not None:
            out["disorder"] = self.disorder
        return out


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelConfig
    ensemble_size: int
    master_seed: int
    workers: int
    output_directory: str
    figures: bool
    params: dict
    defaults_used: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "compute": {
                "ensemble_size": self.ensemble_size,
                "master_seed": self.master_seed,
                "workers": self.workers,
            },
            "output": {"directory": self.output_directory, "figures": self.figures},
            "params": dict(self.params),
        }

    def canonical_json(self) -> str:
        """Payload-determining content only: the output directory is excluded."""
        data = self.to_dict()
        data["output"] = {"figures": self.figures}
        return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _require_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    return dict(obj)


def _take(block: dict, key: str, types, path: str, default=_REQUIRED, defaults_used=None):
    if key in block:
        value = block.pop(key)
        if value is None and default is not _REQUIRED:
            return default
        if types is not None and not isinstance(value, types):
            type_names = (
                types.__name__ if isinstance(types, type)
                else "/".join(t.__name__ for t in types)
            )
            raise ConfigError(
                f"{path}.{key}: expected {type_names}, got {type(value).__name__}"
            )
        if isinstance(value, bool) and types is not None and bool not in (
            types if isinstance(types, tuple) else (types,)
        ):
            raise ConfigError(f"{path}.{key}: expected a number, got a boolean")
        return value
    if default is _REQUIRED:
        raise ConfigError(f"{path}.{key}: required key is missing")
    if defaults_used is not None:
        defaults_used.append(f"{path}.{key} = {default!r}")
    return default


def _reject_unknown(block: dict, path: str):
    if block:
        key = sorted(block)[0]
        raise ConfigError(f"{path}.{key}: unknown key")


def _parse_model(block, defaults_used) -> ModelConfig:
    block = _require_mapping(block, "model")
    if "preset" in block:
        preset = _take(block, "preset", str, "model")
        if preset not in _MODEL_PRESETS:
            raise ConfigError(
                f"model.preset: unknown preset {preset!r}; "
                f"expected one of {sorted(_MODEL_PRESETS)}"
            )
        params = {}
        for key, (types, default) in _MODEL_PRESETS[preset].items():
            params[key] = _take(block, key, types, "model", default, defaults_used)
        _reject_unknown(block, "model")
        return ModelConfig(preset=preset, preset_params=params)

    geometry = _require_mapping(_take(block, "geometry", dict, "model"), "model.geometry")
    geo = {
        "dimension": _take(geometry, "dimension", int, "model.geometry"),
        "sides": _take(geometry, "sides", list, "model.geometry"),
        "spacing": _take(geometry, "spacing", _NUMBER, "model.geometry"),
        "cell": _take(geometry, "cell", list, "model.geometry", None, defaults_used),
    }
    _reject_unknown(geometry, "model.geometry")
    background = _take(block, "background", str, "model")
    profile = _take(block, "profile", str, "model", None, defaults_used)
    eps = _take(block, "eps", _NUMBER, "model", 0.0, defaults_used)
    disorder = _take(block, "disorder", dict, "model", None, defaults_used)
    if disorder is not None:
        disorder = _require_mapping(disorder, "model.disorder")
        dist = _take(disorder, "distribution", list, "model.disorder")
        _reject_unknown(disorder, "model.disorder")
        disorder = {"distribution": dist}
    _reject_unknown(block, "model")
    return ModelConfig(
        preset=None, geometry=geo, background_file=background,
        profile_file=profile, eps=float(eps), disorder=disorder,
    )


def parse_config_data(data, source: str = "<config>") -> ExperimentConfig:
    data = _require_mapping(data, source)
    defaults_used: list[str] = []
    experiment = _take(data, "experiment", str, source)
    if experiment not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"{source}.experiment: unknown kind {experiment!r}; "
            f"expected one of {EXPERIMENT_KINDS}"
        )
    model = _parse_model(_take(data, "model", dict, source), defaults_used)

    compute = _require_mapping(_take(data, "compute", dict, source, {}), "compute")
    ensemble_size = _take(compute, "ensemble_size", int, "compute", 1, defaults_used)
    master_seed = _take(compute, "master_seed", int, "compute", 0, defaults_used)
    workers = _take(compute, "workers", int, "compute", 1, defaults_used)
    _reject_unknown(compute, "compute")
    if ensemble_size < 1:
        raise ConfigError("compute.ensemble_size: must be >= 1")

    output = _require_mapping(_take(data, "output", dict, source, {}), "output")
    out_dir = _take(output, "directory", str, "output", "out", defaults_used)
    figures = _take(output, "figures", bool, "output", True, defaults_used)
    _reject_unknown(output, "output")

    raw_params = _require_mapping(_take(data, "params", dict, source, {}), "params")
    schema = _PARAM_SCHEMAS[experiment]
    params = {}
    for key, (types, default) in schema.items():
        params[key] = _take(raw_params, key, types, "params", default, defaults_used)
    _reject_unknown(raw_params, "params")
    _reject_unknown(data, source)

    lam = params.get("lambda")
    if isinstance(lam, _NUMBER) and lam < 0:
        raise ConfigError("params.lambda: must be >= 0")
    return ExperimentConfig(
        experiment=experiment,
        model=model,
        ensemble_size=int(ensemble_size),
        master_seed=int(master_seed),
        workers=int(workers),
        output_directory=out_dir,
        figures=bool(figures),
        params=params,
        defaults_used=defaults_used,
    )


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return parse_config_data(data, source=str(path))
