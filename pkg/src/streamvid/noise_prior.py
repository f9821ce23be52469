"""Noise-prior construction for streaming generation.

The noise slot of the diffusion process is filled either with fresh
Gaussian noise (first frame of a new scene) or with the previous frame's
denoised latent, normalized to zero mean / unit variance so it keeps the
scale the schedule expects. Without that normalization the training loss
blows up, so every non-Gaussian prior goes through ``normalize_prior``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor

from .scheduler import BetaSchedule, q_sample

STRATEGIES = ("real_latent", "noised_real_latent", "denoised_latent")

ORIGIN_GAUSSIAN = "gaussian"
ORIGIN_REFERENCE = "reference"
ORIGIN_PROPAGATED = "propagated"


@dataclass(frozen=True)
class NoisePrior:
    value: Tensor
    origin: str  # gaussian | reference | propagated


def normalize_prior(z: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalize a latent to zero mean, unit variance over all its elements.

    One mean/variance per sample (all C*H*W elements jointly), no learned
    affine. A constant input maps to zeros thanks to the epsilon guard.
    Batched (B,C,H,W) input is normalized per sample.
    """
    if not torch.isfinite(z).all():
        raise ValueError("prior input contains non-finite values")
    dims = tuple(range(1, z.ndim)) if z.ndim == 4 else tuple(range(z.ndim))
    keep = z.ndim == 4
    # Statistics in float64 so a constant input really lands on zeros.
    zd = z.double()
    mu = zd.mean(dim=dims, keepdim=keep)
    var = zd.var(dim=dims, unbiased=False, keepdim=keep)
    return ((zd - mu) / torch.sqrt(var + epsilon)).to(z.dtype)


def make_prior(
    prev: Optional[Tensor],
    shape: tuple[int, ...],
    mode: str,
    strategy: str = "denoised_latent",
    sched: Optional[BetaSchedule] = None,
    t_noise: Optional[int] = None,
    rng: Optional[torch.Generator] = None,
    epsilon: float = 1e-5,
    frame_index: int = 1,
) -> NoisePrior:
    """Build the prior for one frame.

    ``prev`` is the source latent whose meaning depends on context: the cached
    denoised latent for the default strategy, or the encoded real previous
    frame for the ablation strategies. Frame 1 in generator mode draws fresh
    Gaussian noise; frame 1 in simulator mode normalizes the encoded
    reference frame.
    """
    if mode not in ("generator", "simulator"):
        raise ValueError(f"unknown mode {mode!r}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown prior strategy {strategy!r}")

    if frame_index == 1:
        if mode == "generator":
            if prev is not None:
                raise ValueError("generator mode frame 1 takes no previous latent")
            value = torch.randn(shape, generator=rng)
            return NoisePrior(value=value, origin=ORIGIN_GAUSSIAN)
        if prev is None:
            raise RuntimeError("simulator mode requires a reference latent at frame 1")
        return NoisePrior(value=normalize_prior(prev, epsilon), origin=ORIGIN_REFERENCE)

    if prev is None:
        raise RuntimeError(f"frame {frame_index} requires a previous latent")
    source = prev
    if strategy == "noised_real_latent":
        if t_noise is None:
            raise ValueError("noised_real_latent strategy requires t_noise")
        if sched is None:
            raise ValueError("noised_real_latent strategy requires a schedule")
        gauss = torch.randn(source.shape, generator=rng, dtype=source.dtype)
        source = q_sample(source, t_noise, gauss, sched)
    return NoisePrior(value=normalize_prior(source, epsilon), origin=ORIGIN_PROPAGATED)
