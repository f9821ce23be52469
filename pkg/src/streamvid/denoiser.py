"""Conditional noise-prediction U-Net over latents.

A small convolutional residual U-Net with sinusoidal timestep embedding.
Layout conditioning enters through a parallel control branch whose features
are added into the encoder activations via zero-initialized 1x1 projections,
so at initialization the conditional and unconditional outputs are
identical and conditioning fades in smoothly during training. ``control=None``
selects a learned null-control embedding (the classifier-free branch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .checkpoint import load_checkpoint, save_checkpoint
from .scheduler import cfg_combine


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 4
    control_channels: int = 16
    base_width: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    res_blocks: tuple[int, ...] = (2, 1)
    time_dim: int = 64
    control_stem_kernel: int = 3
    attention: bool = False

    def __post_init__(self):
        if len(self.res_blocks) != len(self.channel_mults):
            raise ValueError("res_blocks must give one count per resolution level")


def _norm(ch: int) -> nn.GroupNorm:
    groups = 4 if ch % 4 == 0 and ch >= 8 else 1
    return nn.GroupNorm(groups, ch)


def timestep_embedding(t: Tensor, dim: int) -> Tensor:
    """Sinusoidal embedding of (B,) timesteps into (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1))
    args = t.double().unsqueeze(1) * freqs.unsqueeze(0)
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros(emb.shape[0], 1, dtype=emb.dtype)], dim=1)
    return emb


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x: Tensor, temb: Tensor) -> Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.norm = _norm(ch)
        self.qkv = nn.Conv2d(ch, 3 * ch, 1)
        self.out = nn.Conv2d(ch, ch, 1)

    def forward(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(B, 3, C, H * W).unbind(1)
        attn = torch.softmax(q.transpose(1, 2) @ k / math.sqrt(C), dim=-1)
        h = (v @ attn.transpose(1, 2)).reshape(B, C, H, W)
        return x + self.out(h)


def _zero_conv(in_ch: int, out_ch: int) -> nn.Conv2d:
    conv = nn.Conv2d(in_ch, out_ch, 1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


class Denoiser(nn.Module):
    def __init__(self, config: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        self.config = config
        w = config.base_width
        widths = [w * m for m in config.channel_mults]
        tdim = config.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(tdim, tdim), nn.SiLU(), nn.Linear(tdim, tdim)
        )
        self.conv_in = nn.Conv2d(config.latent_channels, widths[0], 3, padding=1)

        # Control branch mirrors the encoder path; learned null embedding
        # stands in when no layout is given.
        self.null_control = nn.Parameter(torch.zeros(config.control_channels))
        k = config.control_stem_kernel
        self.control_stem = nn.Conv2d(config.control_channels, widths[0], k, padding=k // 2)
        self.control_convs = nn.ModuleList()
        self.control_downs = nn.ModuleList()
        self.control_fusions = nn.ModuleList()
        for i, ch in enumerate(widths):
            if i > 0:
                self.control_downs.append(nn.Conv2d(widths[i - 1], ch, 3, stride=2, padding=1))
            self.control_convs.append(nn.Conv2d(ch, ch, 3, padding=1))
            self.control_fusions.append(_zero_conv(ch, ch))

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i, ch in enumerate(widths):
            in_ch = widths[i - 1] if i > 0 else widths[0]
            blocks = nn.ModuleList()
            for j in range(config.res_blocks[i]):
                blocks.append(ResBlock(in_ch if j == 0 else ch, ch, tdim))
            self.down_blocks.append(blocks)
            if i + 1 < len(widths):
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))

        self.mid_block = ResBlock(widths[-1], widths[-1], tdim)
        self.mid_attn = SelfAttention2d(widths[-1]) if config.attention else None

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(len(widths))):
            ch = widths[i]
            blocks = nn.ModuleList()
            for j in range(config.res_blocks[i]):
                blocks.append(ResBlock(ch * 2 if j == 0 else ch, ch, tdim))
            self.up_blocks.append(blocks)
            if i > 0:
                self.upsamples.append(
                    nn.Sequential(
                        nn.Upsample(scale_factor=2, mode="nearest"),
                        nn.Conv2d(ch, widths[i - 1], 3, padding=1),
                    )
                )
        self.norm_out = _norm(widths[0])
        self.conv_out = nn.Conv2d(widths[0], config.latent_channels, 3, padding=1)
        self.act = nn.SiLU()

    # -- conditioning ------------------------------------------------------

    def _control_features(self, control: Tensor) -> list[Tensor]:
        feats = []
        h = self.control_stem(control)
        for i, conv in enumerate(self.control_convs):
            if i > 0:
                h = self.control_downs[i - 1](F.silu(h))
            h = conv(F.silu(h))
            feats.append(h)
        return feats

    def expand_null_control(self, batch: int, hw: tuple[int, int]) -> Tensor:
        p = self.null_control.view(1, -1, 1, 1)
        return p.expand(batch, -1, hw[0], hw[1])

    # -- forward -----------------------------------------------------------

    def forward(self, z_t: Tensor, t, control: Tensor | None = None) -> Tensor:
        single = z_t.ndim == 3
        x = z_t.unsqueeze(0) if single else z_t
        B, _, H, W = x.shape
        if isinstance(t, Tensor):
            tt = t.reshape(-1)
            if tt.numel() == 1:
                tt = tt.expand(B)
        else:
            tt = torch.full((B,), float(t))
        temb = timestep_embedding(tt, self.config.time_dim).to(x.dtype)
        temb = self.time_mlp(temb)

        if control is None:
            ctrl = self.expand_null_control(B, (H, W)).to(x.dtype)
        else:
            ctrl = control.unsqueeze(0) if control.ndim == 3 else control
            if ctrl.shape[-2:] != (H, W):
                raise ValueError(
                    f"control spatial size {tuple(ctrl.shape[-2:])} != latent {(H, W)}"
                )
            if ctrl.shape[0] != B:
                ctrl = ctrl.expand(B, -1, -1, -1)
        ctrl_feats = self._control_features(ctrl)

        h = self.conv_in(x)
        skips = []
        for i, blocks in enumerate(self.down_blocks):
            for block in blocks:
                h = block(h, temb)
            h = h + self.control_fusions[i](ctrl_feats[i])
            skips.append(h)
            if i < len(self.downsamples):
                h = self.downsamples[i](h)

        h = self.mid_block(h, temb)
        if self.mid_attn is not None:
            h = self.mid_attn(h)

        for k, blocks in enumerate(self.up_blocks):
            skip = skips[len(skips) - 1 - k]
            h = torch.cat([h, skip], dim=1)
            for block in blocks:
                h = block(h, temb)
            if k < len(self.upsamples):
                h = self.upsamples[k](h)

        out = self.conv_out(self.act(self.norm_out(h)))
        if not torch.isfinite(out).all():
            raise ValueError("denoiser produced non-finite output")
        return out.squeeze(0) if single else out


def init_weights(config: DenoiserConfig, seed: int) -> Denoiser:
    """Deterministically initialized model; control fusions are exactly zero."""
    torch.manual_seed(seed)
    return Denoiser(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def guided_eps(model: Denoiser, z_t: Tensor, t, control: Tensor | None, cfg_scale: float) -> Tensor:
    """Classifier-free-guided noise prediction."""
    if cfg_scale < 0:
        raise ValueError("cfg_scale must be >= 0")
    if control is None or cfg_scale == 0.0:
        return model(z_t, t, None)
    if cfg_scale == 1.0:
        return model(z_t, t, control)
    return cfg_combine(model(z_t, t, None), model(z_t, t, control), cfg_scale)


TINY_CONFIG = DenoiserConfig(
    base_width=4, channel_mults=(1,), res_blocks=(1,), time_dim=8, control_stem_kernel=1
)


def save_denoiser(model: Denoiser, path: Path) -> None:
    save_checkpoint(path, "denoiser", asdict(model.config), model.state_dict())


def load_denoiser(path: Path) -> Denoiser:
    payload = load_checkpoint(path, expect_kind="denoiser")
    cfg = payload["config"]
    cfg["channel_mults"] = tuple(cfg["channel_mults"])
    cfg["res_blocks"] = tuple(cfg["res_blocks"])
    model = Denoiser(DenoiserConfig(**cfg))
    model.load_state_dict(payload["state"])
    model.eval()
    return model
