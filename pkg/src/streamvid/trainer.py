"""Two-stage diffusion training.

Stage ``image`` pretrains the denoiser on single frames with Gaussian noise;
stage ``video`` finetunes it with the streaming sampler, where the noise slot
holds the propagated prior and the regression target is that same prior.
Cached latents are always detached: the cache is data, not a gradient path.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import LatentCodec
from .denoiser import Denoiser, DenoiserConfig
from .errors import ConfigurationError
from .scenes import SceneRecord, rasterize_layout
from .scheduler import BetaSchedule, ddim_timesteps, ddim_step, predict_z0, q_sample
from .stream_sampler import (
    EpochExhausted,
    StreamingSampler,
    TrainBatchItem,
    make_clips,
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str  # image | video
    steps: int
    out_dir: Path
    lr: float = 1e-4
    batch_size: int = 4
    seed: int = 0
    checkpoint_every: int = 500
    grad_clip: float = 1.0
    cond_dropout: float = 0.1
    init_checkpoint: Optional[Path] = None  # required for stage=video
    # video-stage sampler settings
    chunks_per_video: int = 2
    frame1_gaussian_prob: float = 0.5
    cache_refine_steps: int = 0
    prior_strategy: str = "denoised_latent"
    prior_epsilon: float = 1e-5
    prior_t_noise: Optional[int] = None

    def __post_init__(self):
        if self.stage not in ("image", "video"):
            raise ConfigurationError(f"unknown training stage {self.stage!r}")


@dataclass
class TrainReport:
    losses: list[float]
    wall_time: float
    checkpoint_path: Path
    seed: int
    config: dict = field(default_factory=dict)


def _controls_with_dropout(
    model: Denoiser,
    layouts,
    latent_hw: tuple[int, int],
    rng: torch.Generator,
    dropout: float,
) -> Tensor:
    ctrl = torch.stack(
        [torch.from_numpy(rasterize_layout(l, latent_hw)) for l in layouts]
    )
    if dropout > 0:
        drop = torch.rand(len(layouts), generator=rng) < dropout
        if drop.any():
            null = model.expand_null_control(int(drop.sum()), latent_hw)
            ctrl[drop] = null
    return ctrl


def train_step_image(
    model: Denoiser,
    opt: torch.optim.Optimizer,
    codec: LatentCodec,
    images: Tensor,
    layouts,
    sched: BetaSchedule,
    rng: torch.Generator,
    cond_dropout: float = 0.1,
    grad_clip: float = 1.0,
) -> float:
    with torch.no_grad():
        z0 = codec.encode(images)
    B = z0.shape[0]
    t = torch.randint(1, sched.T + 1, (B,), generator=rng)
    eps = torch.randn(z0.shape, generator=rng)
    z_t = q_sample(z0, t, eps, sched)
    ctrl = _controls_with_dropout(model, layouts, z0.shape[-2:], rng, cond_dropout)
    eps_pred = model(z_t, t, ctrl)
    loss = F.mse_loss(eps_pred, eps)
    if not torch.isfinite(loss):
        raise TrainingDiverged("image-stage loss became non-finite")
    opt.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    opt.step()
    return loss.item()


def _refine_cache_latent(
    model: Denoiser,
    z_t: Tensor,
    t: int,
    ctrl: Tensor,
    sched: BetaSchedule,
    steps: int,
) -> Tensor:
    """k-step DDIM refinement of the cached latent, starting at timestep t."""
    pairs = [(a, b) for a, b in ddim_timesteps(sched.T, steps) if a <= t]
    if not pairs:
        pairs = [(t, 0)]
    z = z_t
    for a, b in pairs:
        eps_pred = model(z, a, ctrl)
        z = ddim_step(z, eps_pred, a, b, eta=0.0, sched=sched)
    return z


def train_step_video(
    model: Denoiser,
    opt: torch.optim.Optimizer,
    codec: LatentCodec,
    items: list[TrainBatchItem],
    sched: BetaSchedule,
    sampler: StreamingSampler,
    rng: torch.Generator,
    cond_dropout: float = 0.1,
    grad_clip: float = 1.0,
    cache_refine_steps: int = 0,
) -> float:
    images = torch.stack([torch.from_numpy(np.asarray(i.image, dtype=np.float32)) for i in items])
    with torch.no_grad():
        z0 = codec.encode(images)
    noise = torch.stack([i.prior.value for i in items]).detach()
    B = z0.shape[0]
    t = torch.randint(1, sched.T + 1, (B,), generator=rng)
    z_t = q_sample(z0, t, noise, sched)
    ctrl = _controls_with_dropout(
        model, [i.layout for i in items], z0.shape[-2:], rng, cond_dropout
    )
    eps_pred = model(z_t, t, ctrl)
    # The regression target is the injected prior itself.
    loss = F.mse_loss(eps_pred, noise)
    if not torch.isfinite(loss):
        raise TrainingDiverged("video-stage loss became non-finite")
    opt.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    opt.step()

    with torch.no_grad():
        if cache_refine_steps > 0:
            clean_ctrl = torch.stack(
                [torch.from_numpy(rasterize_layout(i.layout, z0.shape[-2:])) for i in items]
            )
            for k, item in enumerate(items):
                zk = _refine_cache_latent(
                    model, z_t[k], int(t[k]), clean_ctrl[k], sched, cache_refine_steps
                )
                sampler.update_cache(item.clip_id, item.frame_index, zk)
        else:
            # One-step estimate straight from this iteration's prediction.
            zhat0 = predict_z0(z_t.detach(), eps_pred.detach(), t, sched)
            for k, item in enumerate(items):
                sampler.update_cache(item.clip_id, item.frame_index, zhat0[k])
    return loss.item()


def _write_train_checkpoint(
    path: Path,
    model: Denoiser,
    opt: torch.optim.Optimizer,
    step: int,
    epoch: int,
    rng: torch.Generator,
    sampler: Optional[StreamingSampler],
    config: TrainConfig,
) -> None:
    extra = {
        "optimizer": opt.state_dict(),
        "step": step,
        "epoch": epoch,
        "rng": rng.get_state(),
        "sampler": sampler.state_dict() if sampler is not None else None,
        "stage": config.stage,
    }
    cfg = asdict(model.config)
    save_checkpoint(path, "denoiser", cfg, model.state_dict(), extra=extra)


def _make_sampler(
    cfg: TrainConfig,
    dataset: list[SceneRecord],
    codec: LatentCodec,
    sched: BetaSchedule,
    epoch: int,
) -> StreamingSampler:
    clips = make_clips(dataset, cfg.chunks_per_video)

    def encoder(img: np.ndarray) -> Tensor:
        with torch.no_grad():
            return codec.encode(torch.from_numpy(np.asarray(img, dtype=np.float32)))

    t_noise = cfg.prior_t_noise
    if cfg.prior_strategy == "noised_real_latent" and t_noise is None:
        t_noise = sched.T // 2
    return StreamingSampler(
        clips,
        batch_size=cfg.batch_size,
        encoder=encoder,
        seed=cfg.seed * 1000 + epoch,
        strategy=cfg.prior_strategy,
        frame1_gaussian_prob=cfg.frame1_gaussian_prob,
        epsilon=cfg.prior_epsilon,
        sched=sched,
        t_noise=t_noise,
    )


def run_training(
    cfg: TrainConfig,
    dataset: list[SceneRecord],
    codec: LatentCodec,
    sched: BetaSchedule,
    denoiser_config: DenoiserConfig = DenoiserConfig(),
    resume_from: Optional[Path] = None,
) -> TrainReport:
    """Run one training stage to ``cfg.steps``, checkpointing at the cadence.

    ``resume_from`` restores model, optimizer, rng and sampler state, and
    continues the loss series exactly as the uninterrupted run would.
    """
    t0 = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    codec.eval()

    rng = torch.Generator().manual_seed(cfg.seed)
    start_step, epoch = 0, 0
    sampler: Optional[StreamingSampler] = None

    if resume_from is not None:
        payload = load_checkpoint(resume_from, expect_kind="denoiser")
        dcfg = payload["config"]
        dcfg["channel_mults"] = tuple(dcfg["channel_mults"])
        dcfg["res_blocks"] = tuple(dcfg["res_blocks"])
        model = Denoiser(DenoiserConfig(**dcfg))
        model.load_state_dict(payload["state"])
        extra = payload.get("extra") or {}
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        if "optimizer" in extra:
            opt.load_state_dict(extra["optimizer"])
        start_step = extra.get("step", 0)
        epoch = extra.get("epoch", 0)
        if extra.get("rng") is not None:
            rng.set_state(extra["rng"])
        if cfg.stage == "video":
            sampler = _make_sampler(cfg, dataset, codec, sched, epoch)
            if extra.get("sampler") is not None:
                sampler.load_state_dict(extra["sampler"])
    elif cfg.stage == "video":
        if cfg.init_checkpoint is None:
            raise ConfigurationError("stage=video requires an image-stage checkpoint")
        payload = load_checkpoint(cfg.init_checkpoint, expect_kind="denoiser")
        dcfg = payload["config"]
        dcfg["channel_mults"] = tuple(dcfg["channel_mults"])
        dcfg["res_blocks"] = tuple(dcfg["res_blocks"])
        model = Denoiser(DenoiserConfig(**dcfg))
        model.load_state_dict(payload["state"])
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        sampler = _make_sampler(cfg, dataset, codec, sched, epoch)
    else:
        torch.manual_seed(cfg.seed)
        model = Denoiser(denoiser_config)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    flat = [(img, layout) for scene in dataset for img, layout in scene.frames]
    images_all = torch.stack(
        [torch.from_numpy(np.asarray(img, dtype=np.float32)) for img, _ in flat]
    )

    telemetry = (out_dir / "telemetry.jsonl").open("a")
    ckpt_path = out_dir / f"{cfg.stage}_latest.pt"
    losses: list[float] = []
    model.train()
    try:
        for step in range(start_step, cfg.steps):
            if cfg.stage == "image":
                idx = torch.randint(0, len(flat), (min(cfg.batch_size, len(flat)),), generator=rng)
                batch_imgs = images_all[idx]
                batch_layouts = [flat[int(i)][1] for i in idx]
                loss = train_step_image(
                    model, opt, codec, batch_imgs, batch_layouts, sched, rng,
                    cond_dropout=cfg.cond_dropout, grad_clip=cfg.grad_clip,
                )
            else:
                assert sampler is not None
                try:
                    items = sampler.next_batch()
                except EpochExhausted:
                    epoch += 1
                    sampler = _make_sampler(cfg, dataset, codec, sched, epoch)
                    items = sampler.next_batch()
                loss = train_step_video(
                    model, opt, codec, items, sched, sampler, rng,
                    cond_dropout=cfg.cond_dropout, grad_clip=cfg.grad_clip,
                    cache_refine_steps=cfg.cache_refine_steps,
                )
            losses.append(loss)
            telemetry.write(
                json.dumps(
                    {"step": step, "loss": loss, "lr": cfg.lr, "wall_time": time.time() - t0}
                )
                + "\n"
            )
            if (step + 1) % cfg.checkpoint_every == 0 or step + 1 == cfg.steps:
                _write_train_checkpoint(ckpt_path, model, opt, step + 1, epoch, rng, sampler, cfg)
    except TrainingDiverged:
        # Leave the last good checkpoint in place and re-raise with context.
        telemetry.close()
        raise
    telemetry.close()
    model.eval()
    return TrainReport(
        losses=losses,
        wall_time=time.time() - t0,
        checkpoint_path=ckpt_path,
        seed=cfg.seed,
        config={**asdict(cfg), "out_dir": str(cfg.out_dir),
                "init_checkpoint": str(cfg.init_checkpoint) if cfg.init_checkpoint else None},
    )
