"""Closed-form diffusion math: variance schedules, forward noising, DDIM stepping, guidance.

All operations are pure functions over tensors. Timesteps are 1-based
(t in [1, T]); t=0 is the clean-data boundary with cumulative alpha
defined as 1, so the final DDIM step lands exactly on the predicted
clean latent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor

from .errors import ConfigurationError


def _as_finite(x: Tensor, name: str) -> Tensor:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


@dataclass(frozen=True)
class BetaSchedule:
    """Variance schedule beta_1..beta_T with cumulative products of (1 - beta).

    Arrays are kept in float64 so scalar coefficients stay exact enough for
    tight round-trip tolerances; per-call arithmetic inherits the dtype of
    the latent tensors.
    """

    betas: np.ndarray
    alphas_cum: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ConfigurationError("betas must be a non-empty 1-D array")
        if not ((betas > 0) & (betas < 1)).all():
            raise ConfigurationError("betas must lie strictly in (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_cum", np.cumprod(1.0 - betas))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def alpha_cum(self, t: int) -> float:
        """Cumulative alpha at timestep t, with the t=0 convention of 1."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alphas_cum[t - 1])

    def gather_alpha_cum(self, t: Tensor) -> Tensor:
        """Per-sample cumulative alphas for a 1-D tensor of timesteps."""
        table = torch.from_numpy(np.concatenate(([1.0], self.alphas_cum)))
        return table[t.long()]


def make_schedule(
    T: int = 1000,
    beta_start: float = 0.00085,
    beta_end: float = 0.012,
    kind: str = "scaled-linear",
) -> BetaSchedule:
    """Build a beta schedule.

    ``linear`` interpolates beta directly; ``scaled-linear`` interpolates
    in sqrt(beta) (the convention of the latent-diffusion model family).
    """
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "scaled-linear":
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), T, dtype=np.float64) ** 2
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    return BetaSchedule(betas)


def _resolve_t(t, sched: BetaSchedule, batched: bool):
    """Return (sqrt_ac, sqrt_1m_ac) as python floats or broadcastable tensors."""
    if isinstance(t, Tensor) and t.ndim > 0:
        if not batched:
            raise ValueError("per-sample timesteps require a batched (B,C,H,W) input")
        ac = sched.gather_alpha_cum(t).view(-1, 1, 1, 1)
        return ac.sqrt(), (1.0 - ac).sqrt()
    ti = int(t)
    ac = sched.alpha_cum(ti)
    return math.sqrt(ac), math.sqrt(1.0 - ac)


def q_sample(z0: Tensor, t, eps: Tensor, sched: BetaSchedule) -> Tensor:
    """Forward-noise a clean latent: sqrt(ac_t) * z0 + sqrt(1 - ac_t) * eps.

    ``eps`` is the injected noise sample; it need not be Gaussian, which is
    exactly what lets a propagated prior occupy the noise slot.
    ``t`` may be an int or a 1-D tensor of per-sample timesteps (batched input).
    """
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {tuple(z0.shape)} vs eps {tuple(eps.shape)}")
    _as_finite(z0, "z0")
    _as_finite(eps, "eps")
    sa, sb = _resolve_t(t, sched, batched=z0.ndim == 4)
    if isinstance(sa, Tensor):
        sa = sa.to(z0.dtype)
        sb = sb.to(z0.dtype)
    return sa * z0 + sb * eps


def predict_z0(z_t: Tensor, eps_pred: Tensor, t, sched: BetaSchedule) -> Tensor:
    """Recover the clean-latent estimate: (z_t - sqrt(1-ac_t) * eps) / sqrt(ac_t)."""
    if z_t.shape != eps_pred.shape:
        raise ValueError(
            f"shape mismatch: z_t {tuple(z_t.shape)} vs eps_pred {tuple(eps_pred.shape)}"
        )
    sa, sb = _resolve_t(t, sched, batched=z_t.ndim == 4)
    if isinstance(sa, Tensor):
        sa = sa.to(z_t.dtype)
        sb = sb.to(z_t.dtype)
    return (z_t - sb * eps_pred) / sa


def ddim_step(
    z_t: Tensor,
    eps_pred: Tensor,
    t: int,
    t_prev: int,
    eta: float,
    sched: BetaSchedule,
    rng: torch.Generator | None = None,
) -> Tensor:
    """One reverse step t -> t_prev; t_prev=0 lands on the clean estimate.

    eta=0 is fully deterministic; eta in (0, 1] mixes in fresh Gaussian noise
    with the DDIM sigma.
    """
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must be < t ({t})")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    ac_t = sched.alpha_cum(t)
    ac_prev = sched.alpha_cum(t_prev)
    zhat0 = predict_z0(z_t, eps_pred, t, sched)
    sigma = eta * math.sqrt((1.0 - ac_prev) / (1.0 - ac_t)) * math.sqrt(1.0 - ac_t / ac_prev)
    dir_coef = math.sqrt(max(1.0 - ac_prev - sigma * sigma, 0.0))
    out = math.sqrt(ac_prev) * zhat0 + dir_coef * eps_pred
    if sigma > 0.0:
        noise = torch.randn(z_t.shape, generator=rng, dtype=z_t.dtype, device=z_t.device)
        out = out + sigma * noise
    return out


def cfg_combine(eps_uncond: Tensor, eps_cond: Tensor, scale: float) -> Tensor:
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError("shape mismatch between guidance branches")
    return eps_uncond + scale * (eps_cond - eps_uncond)


def ddim_timesteps(T: int, steps: int) -> list[tuple[int, int]]:
    """Uniformly strided (t, t_prev) pairs from T down to 0, largest t first."""
    if not 1 <= steps:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    steps = min(steps, T)
    ts = np.linspace(T, 1, steps)
    ts = sorted({int(round(x)) for x in ts}, reverse=True)
    return [(t, ts[i + 1] if i + 1 < len(ts) else 0) for i, t in enumerate(ts)]
