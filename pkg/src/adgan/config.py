"""Run configuration: one YAML document holding every tunable of the pipeline."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .losses import AblationFlags, LossWeights
from .masksynth import MaskSynthConfig
from .model import GeneratorConfig
from .phantom import PhantomParams
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    data_dir: str = "data"
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "runs"


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    masksynth: MaskSynthConfig = field(default_factory=MaskSynthConfig)
    phantom: PhantomParams = field(default_factory=PhantomParams)
    paths: PathsConfig = field(default_factory=PathsConfig)


def desk_config() -> RunConfig:
    """Small preset: quarter-width networks, 128 px phantoms, 64 px crops."""
    return RunConfig(
        generator=GeneratorConfig(scale_preset="desk"),
        train=TrainConfig(total_iters=2000, const_lr_iters=1000, batch_size=4, crop=64, checkpoint_every=500),
        masksynth=MaskSynthConfig(n_max=12, a_range=(7.0, 11.0), canvas=(128, 128)),
    )


def to_dict(cfg) -> dict:
    """Plain nested dict with tuples as lists, suitable for YAML/JSON."""
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (tuple, list)):
            return [conv(x) for x in v]
        return v
    return conv(cfg)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key {where}.{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (RunConfig, "generator"): GeneratorConfig,
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "masksynth"): MaskSynthConfig,
    (RunConfig, "phantom"): PhantomParams,
    (RunConfig, "paths"): PathsConfig,
    (TrainConfig, "weights"): LossWeights,
    (TrainConfig, "flags"): AblationFlags,
}


def from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "config")


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> RunConfig:
    return from_dict(yaml.safe_load(text))


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def save(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dumps(cfg))
    return path
