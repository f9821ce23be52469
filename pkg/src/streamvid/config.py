"""Run configuration: nested defaults, YAML config file, dotted-key overrides.

Precedence is CLI override > config file > default. Unknown keys are
rejected. Every artifact-producing command writes the resolved snapshot
next to its outputs so runs are reproducible from snapshot + seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigurationError


@dataclass
class DataCfg:
    scenes: int = 8
    frames_per_scene: int = 8
    image_size: int = 64
    seed: int = 7
    dir: str = "runs/data"


@dataclass
class CodecCfg:
    hidden: tuple[int, ...] = (32, 64)
    latent_channels: int = 4
    train_steps: int = 2000
    lr: float = 2e-3
    batch_size: int = 16
    seed: int = 0
    checkpoint: str = "runs/codec.pt"


@dataclass
class SchedulerCfg:
    T: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012
    kind: str = "scaled-linear"


@dataclass
class DenoiserCfg:
    base_width: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    res_blocks: tuple[int, ...] = (2, 1)
    time_dim: int = 64
    attention: bool = False
    seed: int = 0


@dataclass
class PriorCfg:
    strategy: str = "denoised_latent"
    epsilon: float = 1e-5
    t_noise: Optional[int] = None


@dataclass
class SamplerCfg:
    chunks_per_video: int = 2
    batch_size: int = 4
    cache_refine_steps: int = 0
    frame1_gaussian_prob: float = 0.5


@dataclass
class TrainerCfg:
    image_steps: int = 600
    video_steps: int = 2000
    lr: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    checkpoint_every: int = 500
    grad_clip: float = 1.0
    cond_dropout: float = 0.1
    out_dir: str = "runs/train"


@dataclass
class GenerateCfg:
    ddim_steps: int = 25
    cfg_scale: float = 5.0
    eta: float = 0.0
    mode: str = "generator"
    seed: int = 0
    strategy: str = "denoised_latent"


@dataclass
class EvalCfg:
    feature: str = "random"  # random | trained
    feature_train_steps: int = 300
    seed: int = 0


@dataclass
class ServeCfg:
    host: str = "127.0.0.1"
    port: int = 8601
    capacity: int = 8
    ttl_seconds: float = 600.0


@dataclass
class RunConfig:
    data: DataCfg = field(default_factory=DataCfg)
    codec: CodecCfg = field(default_factory=CodecCfg)
    scheduler: SchedulerCfg = field(default_factory=SchedulerCfg)
    denoiser: DenoiserCfg = field(default_factory=DenoiserCfg)
    prior: PriorCfg = field(default_factory=PriorCfg)
    sampler: SamplerCfg = field(default_factory=SamplerCfg)
    trainer: TrainerCfg = field(default_factory=TrainerCfg)
    generate: GenerateCfg = field(default_factory=GenerateCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    serve: ServeCfg = field(default_factory=ServeCfg)


def _apply(section, values: dict, prefix: str) -> None:
    names = {f.name: f for f in dataclasses.fields(section)}
    for key, value in values.items():
        if key not in names:
            raise ConfigurationError(f"unknown configuration key {prefix}{key}")
        current = getattr(section, key)
        if isinstance(current, tuple) and isinstance(value, (list, tuple)):
            value = tuple(value)
        elif isinstance(current, float) and isinstance(value, (int, str)):
            # YAML 1.1 parses "1e-3" as a string; coerce toward the default's type.
            try:
                value = float(value)
            except ValueError:
                raise ConfigurationError(f"{prefix}{key}: expected a number, got {value!r}")
        elif isinstance(current, int) and not isinstance(current, bool) and isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                raise ConfigurationError(f"{prefix}{key}: expected an integer, got {value!r}")
        setattr(section, key, value)


def load_config(path: Optional[Path] = None, overrides: Optional[list[str]] = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional YAML file, and overrides.

    Overrides are ``section.key=value`` strings; values are parsed as YAML.
    """
    cfg = RunConfig()
    sections = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: config file must be a mapping")
        for name, values in doc.items():
            if name not in sections:
                raise ConfigurationError(f"unknown configuration section {name!r}")
            if not isinstance(values, dict):
                raise ConfigurationError(f"section {name!r} must be a mapping")
            _apply(sections[name], values, f"{name}.")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigurationError(f"override key {dotted!r} must be section.key")
        name, key = dotted.split(".", 1)
        if name not in sections:
            raise ConfigurationError(f"unknown configuration section {name!r}")
        _apply(sections[name], {key: yaml.safe_load(raw)}, f"{name}.")
    return cfg


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def config_dict(cfg: RunConfig) -> dict:
    return _plain(asdict(cfg))


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_dict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_snapshot(cfg: RunConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config_dict(cfg), sort_keys=True))
