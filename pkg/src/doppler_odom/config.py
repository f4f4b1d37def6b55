"""YAML configuration for the odometry pipeline.

Sections mirror the stages::

    scan:         voxel, range_min, range_max, normal_k, normal_radius, full_res_normals
    ego:          tau0, kappa, huber_delta, max_iters, tol, max_halvings, refit_static
    cluster:      min_cluster_size, min_samples, allow_single_cluster
    velocity:     lambda_gate, eps_floor, phi_min, sigma_min, refit
    prediction:   omega_max, noise_policy
    registration: lambda_v, tukey_g, tukey_v, max_corr_dist, max_iters, ...
    ablation:     enable_vf, enable_dpp, enable_dr

Missing keys take their defaults; unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .clustering import ClusterParams
from .ego import VelocityFilterParams
from .errors import ConfigError
from .pipeline import PipelineConfig
from .registration import RegistrationParams
from .velocity import VelocityParams

_TOP = {
    "scan": ("voxel", "range_min", "range_max", "normal_k", "normal_radius", "full_res_normals"),
    "prediction": ("omega_max", "noise_policy"),
    "ablation": ("enable_vf", "enable_dpp", "enable_dr"),
}
_NESTED = {
    "ego": VelocityFilterParams,
    "cluster": ClusterParams,
    "velocity": VelocityParams,
    "registration": RegistrationParams,
}


def _coerce(value, default, where: str):
    """Cast a YAML scalar to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _section(data, name):
    sec = data.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sec


def config_from_dict(data: dict) -> PipelineConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = set(data) - set(_TOP) - set(_NESTED)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    base = PipelineConfig()
    kw = {}
    for sec_name, keys in _TOP.items():
        sec = _section(data, sec_name)
        bad = set(sec) - set(keys)
        if bad:
            raise ConfigError(f"unknown keys in {sec_name!r}: {sorted(bad)}")
        for k, v in sec.items():
            kw[k] = _coerce(v, getattr(base, k), f"{sec_name}.{k}")
    for sec_name, cls in _NESTED.items():
        sec = _section(data, sec_name)
        default = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(sec) - names
        if bad:
            raise ConfigError(f"unknown keys in {sec_name!r}: {sorted(bad)}")
        vals = {k: _coerce(v, getattr(default, k), f"{sec_name}.{k}") for k, v in sec.items()}
        try:
            kw[sec_name] = cls(**vals)
        except ValueError as exc:
            raise ConfigError(f"{sec_name}: {exc}") from None
    # an explicit enable_dpp=true next to enable_vf=false is contradictory
    abl = _section(data, "ablation")
    if abl.get("enable_vf") is False and abl.get("enable_dpp") is True:
        raise ConfigError("ablation: enable_dpp requires enable_vf")
    try:
        return PipelineConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(config: PipelineConfig) -> dict:
    out = {name: {k: getattr(config, k) for k in keys} for name, keys in _TOP.items()}
    for name in _NESTED:
        out[name] = dataclasses.asdict(getattr(config, name))
    return out


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data)


def dump_config(config: PipelineConfig, path=None) -> str:
    text = yaml.safe_dump(config_to_dict(config), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
