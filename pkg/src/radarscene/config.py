"""Structured run configuration: YAML sections mapped onto typed dataclasses.

Unknown sections or keys are rejected so typos fail fast (exit code 2 at the
CLI boundary).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .core import RadarConfig
from .train import LossWeights, TrainConfig


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass(frozen=True)
class DetectionParams:
    c_th: float = 0.21
    c_multi_th: float = 0.2
    a_th: float = 0.3
    smoothing_bins: float = 5.0


@dataclass(frozen=True)
class MultipathParams:
    range_gate: float = 0.5
    angle_gate_deg: float = 10.0
    merge_radius: float = 0.5
    merge_angle_deg: float = 5.0


@dataclass(frozen=True)
class OccupancyParams:
    window: int = 10
    power_threshold: float = 0.15
    cell_size: float = 0.25


@dataclass(frozen=True)
class SceneInitParams:
    n_gaussians: int = 20000
    size: float = 0.5
    alpha0: float = 0.1
    eta0: float = 0.1
    sh0: float = 0.1
    sh_degree: int = 10
    z_min: float = -0.5
    z_max: float = 0.5
    seed: int = 0


@dataclass
class RunConfig:
    radar: RadarConfig = dataclasses.field(default_factory=RadarConfig)
    detection: DetectionParams = dataclasses.field(default_factory=DetectionParams)
    multipath: MultipathParams = dataclasses.field(default_factory=MultipathParams)
    occupancy: OccupancyParams = dataclasses.field(default_factory=OccupancyParams)
    loss_weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    training: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    scene_init: SceneInitParams = dataclasses.field(default_factory=SceneInitParams)


_SECTIONS = {
    "radar": RadarConfig,
    "detection": DetectionParams,
    "multipath": MultipathParams,
    "occupancy": OccupancyParams,
    "loss_weights": LossWeights,
    "training": TrainConfig,
    "scene_init": SceneInitParams,
}


def _coerce(value, target_type):
    # YAML leaves some exponent forms as strings; coerce per annotation.
    if target_type is float:
        return float(value)
    if target_type is int:
        if isinstance(value, float) and value != int(value):
            raise ConfigError(f"expected integer, got {value}")
        return int(value)
    if target_type is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"expected boolean, got {value!r}")
    return value


def _build_section(cls, data: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {section}.{key}")
        ann = fields[key].type
        base = {"float": float, "int": int, "bool": bool}.get(
            str(ann).replace("builtins.", ""), None)
        try:
            kwargs[key] = _coerce(value, base) if base else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {section!r}: {exc}") from exc


def load_run_config(path: str | Path | None) -> RunConfig:
    """Load a YAML run config; a missing path returns all defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections")
    sections = {}
    for name, content in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name!r}")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        sections[name] = _build_section(_SECTIONS[name], content, name)
    return RunConfig(**sections)
