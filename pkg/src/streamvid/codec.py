"""Image <-> latent codec: a small deterministic convolutional autoencoder.

Downsamples 3-channel images by a factor of 4 into 4-channel latents. There
is no KL term; instead a light regularizer pulls the global latent standard
deviation toward 1 so latents live on the same scale as the Gaussian noise
the diffusion process expects.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from .checkpoint import load_checkpoint, save_checkpoint


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    downsample_factor: int = 4
    latent_channels: int = 4
    hidden: tuple[int, ...] = (32, 64)

    def __post_init__(self):
        if self.downsample_factor != 2 ** len(self.hidden):
            raise ValueError("downsample_factor must be 2 ** len(hidden)")


class LatentCodec(nn.Module):
    def __init__(self, config: CodecConfig = CodecConfig()):
        super().__init__()
        self.config = config
        enc: list[nn.Module] = []
        ch = 3
        for w in config.hidden:
            enc += [nn.Conv2d(ch, w, 3, stride=2, padding=1), nn.SiLU()]
            ch = w
        enc += [nn.Conv2d(ch, ch, 3, padding=1), nn.SiLU(),
                nn.Conv2d(ch, config.latent_channels, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        widths = list(reversed(config.hidden))
        dec: list[nn.Module] = [nn.Conv2d(config.latent_channels, widths[0], 3, padding=1), nn.SiLU()]
        for i, w in enumerate(widths):
            nxt = widths[i + 1] if i + 1 < len(widths) else widths[-1]
            dec += [nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(w, nxt, 3, padding=1), nn.SiLU()]
        dec += [nn.Conv2d(widths[-1], 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

    def encode(self, img: Tensor) -> Tensor:
        """Deterministic latent for a (3,H,W) or (B,3,H,W) image in [0,1]."""
        single = img.ndim == 3
        x = img.unsqueeze(0) if single else img
        if x.shape[1] != 3:
            raise ValueError(f"expected 3 image channels, got {x.shape[1]}")
        f = self.config.downsample_factor
        if x.shape[-1] % f or x.shape[-2] % f:
            raise ValueError(f"image size must be divisible by {f}")
        z = self.encoder(x * 2.0 - 1.0)
        if not torch.isfinite(z).all():
            raise ValueError("encoder produced non-finite latent")
        return z.squeeze(0) if single else z

    def decode(self, z: Tensor) -> Tensor:
        """Image in [0,1] for a (C,h,w) or (B,C,h,w) latent."""
        single = z.ndim == 3
        x = z.unsqueeze(0) if single else z
        if x.shape[1] != self.config.latent_channels:
            raise ValueError(
                f"expected {self.config.latent_channels} latent channels, got {x.shape[1]}"
            )
        img = ((self.decoder(x) + 1.0) / 2.0).clamp(0.0, 1.0)
        return img.squeeze(0) if single else img


@dataclass
class CodecTrainReport:
    losses: list[float]
    final_mae: float
    steps_run: int
    wall_time: float
    warning: str | None = None


def train_codec(
    images: np.ndarray,
    config: CodecConfig = CodecConfig(),
    steps: int = 2000,
    lr: float = 2e-3,
    batch_size: int = 16,
    seed: int = 0,
    holdout: np.ndarray | None = None,
    latent_std_weight: float = 0.02,
) -> tuple[LatentCodec, CodecTrainReport]:
    """Train the codec on an (N,3,H,W) image array; deterministic in ``seed``.

    ``holdout`` images (if given) are used only for the reported final MAE.
    """
    if len(images) == 0:
        raise ValueError("empty training set")
    t0 = time.time()
    torch.manual_seed(seed)
    codec = LatentCodec(config)
    if steps <= 0:
        report = CodecTrainReport([], float("nan"), 0, time.time() - t0,
                                  warning="zero training budget; codec returned untrained")
        return codec, report
    data = torch.from_numpy(np.asarray(images, dtype=np.float32))
    opt = torch.optim.Adam(codec.parameters(), lr=lr)
    rng = torch.Generator().manual_seed(seed)
    losses = []
    for step in range(steps):
        idx = torch.randint(0, len(data), (min(batch_size, len(data)),), generator=rng)
        batch = data[idx]
        z = codec.encoder(batch * 2.0 - 1.0)
        recon = codec.decoder(z)  # target space is [-1, 1], pre-clamp
        rec_loss = F.l1_loss(recon, batch * 2.0 - 1.0)
        std_loss = (z.std() - 1.0) ** 2
        loss = rec_loss + latent_std_weight * std_loss
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"codec loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    codec.eval()
    probe = torch.from_numpy(
        np.asarray(holdout if holdout is not None else images, dtype=np.float32)
    )
    with torch.no_grad():
        mae = float((codec.decode(codec.encode(probe)) - probe).abs().mean())
    return codec, CodecTrainReport(losses, mae, steps, time.time() - t0)


def save_codec(codec: LatentCodec, path: Path) -> None:
    save_checkpoint(path, "codec", asdict(codec.config), codec.state_dict())


def load_codec(path: Path) -> LatentCodec:
    payload = load_checkpoint(path, expect_kind="codec")
    cfg = payload["config"]
    cfg["hidden"] = tuple(cfg["hidden"])
    codec = LatentCodec(CodecConfig(**cfg))
    codec.load_state_dict(payload["state"])
    codec.eval()
    return codec
