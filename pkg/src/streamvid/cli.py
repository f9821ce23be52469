"""Command-line entry point orchestrating every pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 missing prerequisite,
4 runtime failure.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import evaluate as ev
from .codec import load_codec, save_codec, train_codec, CodecConfig
from .config import RunConfig, config_dict, config_hash, load_config, write_snapshot
from .denoiser import DenoiserConfig, load_denoiser
from .errors import ConfigurationError, PreconditionError
from .generate import GenConfig, generate_clip
from .scenes import (
    advance_layout,
    layout_to_json,
    load_dataset,
    load_png,
    save_png,
    synthesize_dataset,
)
from .scheduler import make_schedule
from .stream_sampler import make_clips
from .trainer import TrainConfig, run_training


def _schedule(cfg: RunConfig):
    s = cfg.scheduler
    return make_schedule(s.T, s.beta_start, s.beta_end, s.kind)


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise PreconditionError(f"{what} not found at {path}; run the producing subcommand first")
    return Path(path)


def _load_scenes(cfg: RunConfig):
    root = _require(Path(cfg.data.dir), "dataset")
    return load_dataset(root)


def _denoiser_checkpoint(cfg: RunConfig, checkpoint: str | None, stage: str = "video") -> Path:
    if checkpoint:
        return _require(Path(checkpoint), "denoiser checkpoint")
    return _require(Path(cfg.trainer.out_dir) / f"{stage}_latest.pt", "denoiser checkpoint")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML run configuration file.")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Override a configuration key (repeatable).")
@click.pass_context
def cli(ctx, config_path, overrides):
    """Streaming latent video diffusion toolbox."""
    ctx.obj = load_config(Path(config_path) if config_path else None, list(overrides))


@cli.command("synth-data")
@click.pass_obj
def synth_data(cfg: RunConfig):
    """Generate the deterministic synthetic dataset."""
    d = cfg.data
    out = Path(d.dir)
    dirs = synthesize_dataset(out, d.scenes, d.frames_per_scene, d.image_size, d.seed)
    write_snapshot(cfg, out / "config_snapshot.yaml")
    click.echo(f"wrote {len(dirs)} scenes under {out}")


@cli.command("train")
@click.option("--stage", type=click.Choice(["codec", "image", "video"]), required=True)
@click.pass_obj
def train(cfg: RunConfig, stage):
    """Train one pipeline stage (codec, image pretrain, or video finetune)."""
    scenes = _load_scenes(cfg)
    out_dir = Path(cfg.trainer.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if stage == "codec":
        images = np.stack([img for s in scenes for img, _ in s.frames])
        codec, report = train_codec(
            images,
            CodecConfig(hidden=tuple(cfg.codec.hidden), latent_channels=cfg.codec.latent_channels),
            steps=cfg.codec.train_steps, lr=cfg.codec.lr,
            batch_size=cfg.codec.batch_size, seed=cfg.codec.seed,
        )
        save_codec(codec, Path(cfg.codec.checkpoint))
        write_snapshot(cfg, out_dir / "config_snapshot.yaml")
        click.echo(f"codec MAE {report.final_mae:.4f} after {report.steps_run} steps")
        return
    codec = load_codec(_require(Path(cfg.codec.checkpoint), "codec checkpoint"))
    sched = _schedule(cfg)
    d = cfg.denoiser
    tcfg = TrainConfig(
        stage=stage,
        steps=cfg.trainer.image_steps if stage == "image" else cfg.trainer.video_steps,
        out_dir=out_dir,
        lr=cfg.trainer.lr,
        batch_size=cfg.trainer.batch_size if stage == "image" else cfg.sampler.batch_size,
        seed=cfg.trainer.seed,
        checkpoint_every=cfg.trainer.checkpoint_every,
        grad_clip=cfg.trainer.grad_clip,
        cond_dropout=cfg.trainer.cond_dropout,
        init_checkpoint=(out_dir / "image_latest.pt") if stage == "video" else None,
        chunks_per_video=cfg.sampler.chunks_per_video,
        frame1_gaussian_prob=cfg.sampler.frame1_gaussian_prob,
        cache_refine_steps=cfg.sampler.cache_refine_steps,
        prior_strategy=cfg.prior.strategy,
        prior_epsilon=cfg.prior.epsilon,
        prior_t_noise=cfg.prior.t_noise,
    )
    if stage == "video":
        _require(tcfg.init_checkpoint, "image-stage checkpoint")
    report = run_training(
        tcfg, scenes, codec, sched,
        denoiser_config=DenoiserConfig(
            base_width=d.base_width, channel_mults=tuple(d.channel_mults),
            res_blocks=tuple(d.res_blocks), time_dim=d.time_dim, attention=d.attention,
        ),
    )
    write_snapshot(cfg, out_dir / "config_snapshot.yaml")
    click.echo(
        f"{stage} stage: {len(report.losses)} steps, "
        f"final loss {report.losses[-1]:.4f}, checkpoint {report.checkpoint_path}"
    )


def _layout_hash(layout) -> str:
    blob = json.dumps(layout_to_json(layout), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@cli.command("generate")
@click.option("--mode", type=click.Choice(["generator", "simulator"]), default=None)
@click.option("--frames", type=int, default=8, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--scene", "scene_index", type=int, default=0, show_default=True,
              help="Dataset scene whose layouts condition the stream.")
@click.option("--reference", type=click.Path(exists=True), default=None,
              help="Reference frame image (simulator mode).")
@click.option("--checkpoint", type=click.Path(), default=None)
@click.pass_obj
def generate(cfg: RunConfig, mode, frames, out_dir, scene_index, reference, checkpoint):
    """Stream frames into numbered image files plus a manifest."""
    scenes = _load_scenes(cfg)
    if not 0 <= scene_index < len(scenes):
        raise ConfigurationError(f"scene index {scene_index} out of range")
    codec = load_codec(_require(Path(cfg.codec.checkpoint), "codec checkpoint"))
    model = load_denoiser(_denoiser_checkpoint(cfg, checkpoint))
    sched = _schedule(cfg)
    g = cfg.generate
    mode = mode or g.mode
    layouts = [layout for _, layout in scenes[scene_index].frames]
    while len(layouts) < frames:
        layouts.append(advance_layout(layouts[-1]))
    layouts = layouts[:frames]
    ref_img = load_png(Path(reference)) if reference else None
    if mode == "simulator" and ref_img is None:
        ref_img = scenes[scene_index].frames[0][0]
    size = cfg.data.image_size // codec.config.downsample_factor
    gen_cfg = GenConfig(
        ddim_steps=g.ddim_steps, cfg_scale=g.cfg_scale, eta=g.eta, mode=mode,
        seed=g.seed, prior_strategy=g.strategy, prior_epsilon=cfg.prior.epsilon,
        prior_t_noise=cfg.prior.t_noise, latent_hw=(size, size),
    )
    real_frames = None
    if g.strategy in ("real_latent", "noised_real_latent"):
        real_frames = [img for img, _ in scenes[scene_index].frames][:frames]
    imgs = generate_clip(model, codec, sched, gen_cfg, layouts,
                         reference=ref_img if mode == "simulator" else None,
                         real_frames=real_frames)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(imgs):
        save_png(img, out / f"frame_{i:03d}.png")
    manifest = {
        "seed": g.seed,
        "mode": mode,
        "config": config_dict(cfg),
        "layout_hashes": [_layout_hash(l) for l in layouts],
        "layouts": [layout_to_json(l) for l in layouts],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    write_snapshot(cfg, out / "config_snapshot.yaml")
    click.echo(f"wrote {len(imgs)} frames to {out}")


def _feature_model(cfg: RunConfig, scenes):
    if cfg.eval.feature == "trained":
        images = np.stack([img for s in scenes for img, _ in s.frames])
        labels = np.array([ev.box_count_bucket(l) for s in scenes for _, l in s.frames])
        return ev.train_feature_model(images, labels,
                                      steps=cfg.eval.feature_train_steps, seed=cfg.eval.seed)
    if cfg.eval.feature != "random":
        raise ConfigurationError(f"eval.feature must be random or trained, got {cfg.eval.feature!r}")
    return ev.make_feature_model(cfg.eval.seed)


@cli.command("evaluate")
@click.option("--generated", type=click.Path(exists=True), required=True,
              help="Directory of generated frames (frame_*.png + manifest.json).")
@click.option("--real", "real_dir", type=click.Path(exists=True), required=True,
              help="Dataset directory of real scenes.")
@click.option("--out", "report_path", type=click.Path(), default=None)
@click.pass_obj
def evaluate(cfg: RunConfig, generated, real_dir, report_path):
    """Compute toy Fréchet and consistency metrics for a generated clip."""
    scenes = load_dataset(Path(real_dir))
    gen_dir = Path(generated)
    frame_paths = sorted(gen_dir.glob("frame_*.png"))
    if not frame_paths:
        raise PreconditionError(f"no frame_*.png files under {gen_dir}")
    gen_frames = [load_png(p) for p in frame_paths]
    model = _feature_model(cfg, scenes)
    real_frames = [img for s in scenes for img, _ in s.frames]
    n = len(gen_frames)
    real_clips = [
        [img for img, _ in c.frames]
        for c in make_clips(scenes, max(len(scenes[0].frames) // n, 1))
    ]
    metrics = {
        "toy_fid": ev.toy_fid(np.stack(real_frames), np.stack(gen_frames), model),
        "toy_fvd": ev.toy_fvd(real_clips, [gen_frames], model),
        "temporal_consistency": ev.temporal_consistency(gen_frames),
    }
    report = {"metrics": metrics, "config_hash": config_hash(cfg),
              "generated": str(gen_dir), "real": str(real_dir)}
    out = Path(report_path) if report_path else gen_dir / "eval_report.json"
    out.write_text(json.dumps(report, indent=1, sort_keys=True))
    for k, v in metrics.items():
        click.echo(f"{k:24s} {v:.6f}")
    click.echo(f"report written to {out}")


def _print_table(header: list[str], rows: list[list]) -> None:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    for row in [header] + rows:
        click.echo("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))


@cli.command("ablate")
@click.option("--axis", type=click.Choice(["propagation", "prior-strategy", "chunks", "length"]),
              required=True)
@click.option("--seeds", type=int, default=3, show_default=True)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.pass_obj
def ablate(cfg: RunConfig, axis, seeds, checkpoint):
    """Run one ablation sweep and print a comparison table."""
    scenes = _load_scenes(cfg)
    codec = load_codec(_require(Path(cfg.codec.checkpoint), "codec checkpoint"))
    sched = _schedule(cfg)
    feature = _feature_model(cfg, scenes)
    g = cfg.generate
    size = cfg.data.image_size // codec.config.downsample_factor
    n_frames = len(scenes[0].frames)
    real_clips = [[img for img, _ in s.frames] for s in scenes]
    real_frames = np.stack([img for s in scenes for img, _ in s.frames])

    def _gen(model, strategy, seed, scene, frames=None):
        layouts = [l for _, l in scene.frames][: frames or n_frames]
        while len(layouts) < (frames or n_frames):
            layouts.append(advance_layout(layouts[-1]))
        gen_cfg = GenConfig(
            ddim_steps=g.ddim_steps, cfg_scale=g.cfg_scale, eta=g.eta, mode="generator",
            seed=seed, prior_strategy=strategy, latent_hw=(size, size),
        )
        real = [img for img, _ in scene.frames] if strategy in (
            "real_latent", "noised_real_latent") else None
        return generate_clip(model, codec, sched, gen_cfg, layouts, real_frames=real)

    if axis in ("propagation", "prior-strategy", "length"):
        model = load_denoiser(_denoiser_checkpoint(cfg, checkpoint))

    if axis == "propagation":
        rows = []
        for label, strategy in [("propagated-prior", "denoised_latent"),
                                ("fresh-gaussian", "fresh_gaussian")]:
            fids, fvds, tcs = [], [], []
            for seed in range(seeds):
                clips = [_gen(model, strategy, seed, s) for s in scenes[: min(4, len(scenes))]]
                frames = np.stack([f for c in clips for f in c])
                fids.append(ev.toy_fid(real_frames, frames, feature))
                fvds.append(ev.toy_fvd(real_clips, clips, feature))
                tcs.append(float(np.mean([ev.temporal_consistency(c) for c in clips])))
            rows.append([label, f"{np.mean(fids):.4f}", f"{np.mean(fvds):.4f}", f"{np.mean(tcs):.4f}"])
        _print_table(["model", "toy-FID", "toy-FVD", "temporal-consistency"], rows)
    elif axis == "prior-strategy":
        rows = []
        for strategy in ("real_latent", "noised_real_latent", "denoised_latent"):
            fvds = []
            for seed in range(seeds):
                clips = [_gen(model, strategy, seed, s) for s in scenes[: min(4, len(scenes))]]
                fvds.append(ev.toy_fvd(real_clips, clips, feature))
            rows.append([strategy, f"{np.mean(fvds):.4f}"])
        _print_table(["prior-strategy", "toy-FVD"], rows)
    elif axis == "length":
        rows = []
        for length in (4, 8, 16):
            tcs, fvds = [], []
            for seed in range(seeds):
                clips = [_gen(model, "denoised_latent", seed, s, frames=length)
                         for s in scenes[: min(4, len(scenes))]]
                fvds.append(ev.toy_fvd(real_clips, clips, feature))
                tcs.append(float(np.mean([ev.temporal_consistency(c) for c in clips])))
            rows.append([length, f"{np.mean(fvds):.4f}", f"{np.mean(tcs):.4f}"])
        _print_table(["length", "toy-FVD", "temporal-consistency"], rows)
    else:  # chunks
        image_ckpt = _denoiser_checkpoint(cfg, None, stage="image")
        rows = []
        for chunks in (1, 2, 4):
            if chunks > n_frames:
                continue
            out_dir = Path(cfg.trainer.out_dir) / f"ablate_chunks_{chunks}"
            tcfg = TrainConfig(
                stage="video", steps=cfg.trainer.video_steps, out_dir=out_dir,
                lr=cfg.trainer.lr, batch_size=cfg.sampler.batch_size, seed=cfg.trainer.seed,
                checkpoint_every=max(cfg.trainer.video_steps, 1),
                init_checkpoint=image_ckpt, chunks_per_video=chunks,
                frame1_gaussian_prob=cfg.sampler.frame1_gaussian_prob,
                prior_strategy=cfg.prior.strategy, prior_epsilon=cfg.prior.epsilon,
            )
            report = run_training(tcfg, scenes, codec, sched)
            model = load_denoiser(report.checkpoint_path)
            clips = [_gen(model, "denoised_latent", 0, s) for s in scenes[: min(4, len(scenes))]]
            rows.append([chunks, f"{ev.toy_fvd(real_clips, clips, feature):.4f}",
                         f"{report.losses[-1]:.4f}"])
        _print_table(["chunks", "toy-FVD", "final-loss"], rows)


@cli.command("serve")
@click.option("--checkpoint", type=click.Path(), default=None)
@click.pass_obj
def serve(cfg: RunConfig, checkpoint):
    """Run the generation service."""
    import uvicorn

    from .server import create_app

    codec = load_codec(_require(Path(cfg.codec.checkpoint), "codec checkpoint"))
    model = load_denoiser(_denoiser_checkpoint(cfg, checkpoint))
    sched = _schedule(cfg)
    app = create_app(
        model, codec, sched, defaults=cfg.generate,
        capacity=cfg.serve.capacity, ttl_seconds=cfg.serve.ttl_seconds,
        config_hash=config_hash(cfg),
    )
    uvicorn.run(app, host=cfg.serve.host, port=cfg.serve.port)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except (ConfigurationError, click.UsageError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except PreconditionError as exc:
        click.echo(f"precondition error: {exc}", err=True)
        sys.exit(3)
    except click.Abort:
        sys.exit(4)
    except Exception as exc:  # runtime failure bucket
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(4)


if __name__ == "__main__":
    main()
