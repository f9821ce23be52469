"""Streaming frame-by-frame generation.

A stream is seeded either from Gaussian noise (generator mode) or from an
encoded reference frame (simulator mode). Each step normalizes the cached
latent of the previous frame into the noise prior, runs a guided DDIM chain
over it, caches the fully denoised latent, and decodes the frame. Frame n
depends only on the seed, layouts 1..n and (in simulator mode) the
reference image, so any prefix of a long run equals a shorter run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from .codec import LatentCodec
from .denoiser import Denoiser, guided_eps
from .errors import ConfigurationError
from .noise_prior import NoisePrior, ORIGIN_GAUSSIAN, make_prior
from .scenes import FrameLayout, rasterize_layout
from .scheduler import BetaSchedule, ddim_step, ddim_timesteps


@dataclass(frozen=True)
class GenConfig:
    ddim_steps: int = 25
    cfg_scale: float = 5.0
    eta: float = 0.0
    mode: str = "generator"  # generator | simulator
    seed: int = 0
    prior_strategy: str = "denoised_latent"
    prior_epsilon: float = 1e-5
    prior_t_noise: Optional[int] = None
    latent_hw: tuple[int, int] = (16, 16)  # used only for generator frame 1

    def __post_init__(self):
        if self.ddim_steps < 1:
            raise ConfigurationError("ddim_steps must be >= 1")
        if self.cfg_scale < 0:
            raise ConfigurationError("cfg_scale must be >= 0")
        if self.mode not in ("generator", "simulator"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")


@dataclass
class StreamState:
    config: GenConfig
    frame_index: int  # next frame to generate, 1-based
    cached_latent: Optional[Tensor]
    rng: torch.Generator
    last_prior_origin: Optional[str] = None


def begin_stream(
    model: Denoiser,
    codec: LatentCodec,
    config: GenConfig,
    reference: Optional[np.ndarray] = None,
) -> StreamState:
    if config.mode == "simulator" and reference is None:
        raise ValueError("simulator mode requires a reference image")
    if config.mode == "generator" and reference is not None:
        raise ValueError("generator mode takes no reference image")
    if model.config.latent_channels != codec.config.latent_channels:
        raise ConfigurationError("denoiser and codec disagree on latent channels")
    rng = torch.Generator().manual_seed(config.seed)
    cached = None
    if reference is not None:
        with torch.no_grad():
            cached = codec.encode(torch.from_numpy(np.asarray(reference, dtype=np.float32)))
    return StreamState(config=config, frame_index=1, cached_latent=cached, rng=rng)


def _denoise(
    model: Denoiser,
    sched: BetaSchedule,
    start: Tensor,
    ctrl: Tensor,
    cfg: GenConfig,
    rng: torch.Generator,
) -> Tensor:
    z = start
    for t, t_prev in ddim_timesteps(sched.T, cfg.ddim_steps):
        eps = guided_eps(model, z, t, ctrl, cfg.cfg_scale)
        z = ddim_step(z, eps, t, t_prev, cfg.eta, sched, rng=rng)
    return z


def step_stream(
    model: Denoiser,
    codec: LatentCodec,
    sched: BetaSchedule,
    state: StreamState,
    layout: FrameLayout,
    real_prev: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, StreamState]:
    """Generate one frame and advance the stream state in place.

    ``real_prev`` supplies the previous real frame for the ablation prior
    strategies that source the prior from data rather than the cache.
    """
    cfg = state.config
    prior_source = state.cached_latent
    if cfg.prior_strategy in ("real_latent", "noised_real_latent") and state.frame_index > 1:
        if real_prev is None:
            raise ValueError(f"strategy {cfg.prior_strategy} requires the previous real frame")
        with torch.no_grad():
            prior_source = codec.encode(
                torch.from_numpy(np.asarray(real_prev, dtype=np.float32))
            )
    if prior_source is not None:
        latent_hw = tuple(prior_source.shape[-2:])
    else:
        latent_hw = cfg.latent_hw
    shape = (model.config.latent_channels, *latent_hw)
    mode = cfg.mode if state.frame_index == 1 else "generator"
    t_noise = cfg.prior_t_noise
    if cfg.prior_strategy == "noised_real_latent" and t_noise is None:
        t_noise = sched.T // 2
    if cfg.prior_strategy == "fresh_gaussian" and not (
        state.frame_index == 1 and cfg.mode == "simulator"
    ):
        # Baseline for the propagation ablation: every frame starts from noise.
        prior = NoisePrior(
            value=torch.randn(shape, generator=state.rng), origin=ORIGIN_GAUSSIAN
        )
    else:
        prior = make_prior(
            prior_source,
            shape,
            mode,
            cfg.prior_strategy if cfg.prior_strategy != "fresh_gaussian" else "denoised_latent",
            sched=sched,
            t_noise=t_noise,
            rng=state.rng,
            epsilon=cfg.prior_epsilon,
            frame_index=state.frame_index,
        )
    ctrl = torch.from_numpy(rasterize_layout(layout, latent_hw))
    with torch.no_grad():
        z = _denoise(model, sched, prior.value, ctrl, cfg, state.rng)
        img = codec.decode(z).clamp(0.0, 1.0).numpy()
    state.cached_latent = z
    state.frame_index += 1
    state.last_prior_origin = prior.origin
    return img, state


def generate_clip(
    model: Denoiser,
    codec: LatentCodec,
    sched: BetaSchedule,
    config: GenConfig,
    layouts: list[FrameLayout],
    reference: Optional[np.ndarray] = None,
    real_frames: Optional[list[np.ndarray]] = None,
) -> list[np.ndarray]:
    """Fold step_stream over the layouts; prefixes match shorter runs exactly.

    ``real_frames`` (aligned with ``layouts``) feeds the data-sourced prior
    strategies; frame n's prior then comes from real frame n-1.
    """
    if not layouts:
        raise ValueError("layouts must be non-empty")
    state = begin_stream(model, codec, config, reference)
    frames: list[np.ndarray] = []
    for i, layout in enumerate(layouts):
        real_prev = real_frames[i - 1] if real_frames is not None and i > 0 else None
        img, state = step_stream(model, codec, sched, state, layout, real_prev=real_prev)
        frames.append(img)
    return frames
