"""Quantitative evaluation: toy Fréchet distances, temporal consistency,
layout adherence, and the streaming-vs-sliding-window memory benchmark.

The Fréchet metrics use a desk-scale feature extractor (fixed-seed random
features by default, optionally trained as a box-count classifier); they are
internally consistent but not comparable with published FID/FVD numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError
from .scenes import (
    CLASS_COLORS,
    Box,
    ClipRecord,
    FrameLayout,
    _box_mask,
    synthesize_scene,
)
from .stream_sampler import EpochExhausted, SlidingWindowSampler, StreamingSampler, make_clips

FEATURE_DIM = 64


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

class FeatureNet(nn.Module):
    """Tiny conv net; penultimate activations are the evaluation features."""

    def __init__(self, n_buckets: int = 5):
        super().__init__()
        self.backbone = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.SiLU(),
        )
        self.fc = nn.Linear(64, FEATURE_DIM)
        self.head = nn.Linear(FEATURE_DIM, n_buckets)
        self.trained = False

    def features(self, x: torch.Tensor) -> torch.Tensor:
        h = self.backbone(x).mean(dim=(2, 3))
        return self.fc(h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(F.silu(self.features(x)))


def make_feature_model(seed: int = 0) -> FeatureNet:
    """Fixed-seed random-feature extractor (the no-training config choice)."""
    torch.manual_seed(seed)
    model = FeatureNet()
    model.eval()
    return model


def box_count_bucket(layout: FrameLayout, n_buckets: int = 5) -> int:
    return min(len(layout.boxes), n_buckets - 1)


def train_feature_model(
    images: np.ndarray,
    labels: np.ndarray,
    steps: int = 300,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> FeatureNet:
    """Train the extractor as a classifier over box-count buckets."""
    torch.manual_seed(seed)
    model = FeatureNet()
    data = torch.from_numpy(np.asarray(images, dtype=np.float32))
    target = torch.from_numpy(np.asarray(labels, dtype=np.int64))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = torch.Generator().manual_seed(seed)
    for _ in range(steps):
        idx = torch.randint(0, len(data), (min(batch_size, len(data)),), generator=rng)
        loss = F.cross_entropy(model(data[idx]), target[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()
    model.trained = True
    return model


def extract_features(images: Iterable[np.ndarray], model: FeatureNet) -> np.ndarray:
    """Per-frame features, shape (N, 64)."""
    batch = torch.from_numpy(np.stack([np.asarray(i, dtype=np.float32) for i in images]))
    with torch.no_grad():
        return model.features(batch).numpy().astype(np.float64)


def extract_clip_features(clips: Iterable[list[np.ndarray]], model: FeatureNet) -> np.ndarray:
    """Per-clip features: temporal mean of frame features concatenated with the
    temporal mean absolute difference, a joint appearance + motion summary."""
    out = []
    for frames in clips:
        f = extract_features(frames, model)
        motion = np.abs(np.diff(f, axis=0)).mean(axis=0) if len(f) > 1 else np.zeros(f.shape[1])
        out.append(np.concatenate([f.mean(axis=0), motion]))
    return np.stack(out)


# ---------------------------------------------------------------------------
# Fréchet distance
# ---------------------------------------------------------------------------

@dataclass
class FrechetStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int
    shrunk: bool = False


def fit_stats(features: np.ndarray, shrinkage: float = 1e-3) -> FrechetStats:
    """Mean/covariance of a feature matrix; shrinks toward identity on small samples."""
    feats = np.asarray(features, dtype=np.float64)
    n, d = feats.shape
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) if n > 1 else np.zeros((d, d))
    cov = np.atleast_2d(cov)
    shrunk = n < 4 * d
    if shrunk:
        cov = (1.0 - shrinkage) * cov + shrinkage * np.eye(d)
    cov = (cov + cov.T) / 2.0
    return FrechetStats(mean=mu, cov=cov, count=n, shrunk=shrunk)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FrechetStats, b: FrechetStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("dimension mismatch between feature statistics")
    diff = float(np.sum((a.mean - b.mean) ** 2))
    sqrt_a = _sqrtm_psd(a.cov)
    cross = _sqrtm_psd(sqrt_a @ b.cov @ sqrt_a)
    val = diff + float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(val, 0.0)


def toy_fid(real: np.ndarray, generated: np.ndarray, model: FeatureNet) -> float:
    return frechet_distance(
        fit_stats(extract_features(real, model)),
        fit_stats(extract_features(generated, model)),
    )


def toy_fvd(real_clips, generated_clips, model: FeatureNet) -> float:
    return frechet_distance(
        fit_stats(extract_clip_features(real_clips, model)),
        fit_stats(extract_clip_features(generated_clips, model)),
    )


# ---------------------------------------------------------------------------
# Temporal consistency and layout adherence
# ---------------------------------------------------------------------------

def temporal_consistency(frames: list[np.ndarray]) -> float:
    """Mean absolute pixel difference between consecutive frames; lower is smoother."""
    if len(frames) < 2:
        raise ValueError("temporal consistency needs at least 2 frames")
    diffs = [
        float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).mean())
        for a, b in zip(frames[:-1], frames[1:])
    ]
    return float(np.mean(diffs))


@dataclass
class AdherenceReport:
    per_frame_recall: list[float]
    per_frame_false_positives: list[int]
    per_frame_box_errors: list[list[Optional[float]]]  # px distance, None if missed
    score: float  # mean over frames of recall / (1 + false positives)


COLOR_TOLERANCE = 0.25
MIN_MATCH_FRACTION = 0.20
LOCALIZE_PX = 4.0
FP_PIXEL_THRESHOLD = 30


def _dilate_mask(mask: np.ndarray, px: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(px):
        grown = out.copy()
        grown[1:] |= out[:-1]
        grown[:-1] |= out[1:]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


def locate_box(frame: np.ndarray, box: Box) -> Optional[float]:
    """Pixel distance between the box center and the centroid of matching
    class-colored pixels near the box; None when the box is not found."""
    img = np.asarray(frame, dtype=np.float64)
    _, H, W = img.shape
    rect = _box_mask(box, H, W)
    if not rect.any():
        return None
    region = _dilate_mask(rect, int(LOCALIZE_PX))
    dist = np.linalg.norm(img - CLASS_COLORS[box.class_id][:, None, None], axis=0)
    match = (dist < COLOR_TOLERANCE) & region
    if match.sum() < max(4, MIN_MATCH_FRACTION * rect.sum()):
        return None
    ys, xs = np.nonzero(match)
    cx_px, cy_px = box.center[0] * W - 0.5, box.center[1] * H - 0.5
    return float(np.hypot(xs.mean() - cx_px, ys.mean() - cy_px))


def layout_adherence(frames: list[np.ndarray], layouts: list[FrameLayout]) -> AdherenceReport:
    """Color-and-position scan of generated frames against their layouts.

    A box counts as recalled when enough pixels near its rectangle match its
    class color and their centroid lies within 4 px of the box center. A
    false positive is a class whose color appears in bulk outside all of
    that class's boxes. Score = mean over frames of recall / (1 + fp).
    """
    if len(frames) != len(layouts):
        raise ValueError("frames and layouts must have equal length")
    recalls, fps, errors = [], [], []
    for frame, layout in zip(frames, layouts):
        img = np.asarray(frame, dtype=np.float64)
        _, H, W = img.shape
        frame_errors: list[Optional[float]] = []
        found = 0
        for box in layout.boxes:
            err = locate_box(frame, box)
            frame_errors.append(err)
            if err is not None and err <= LOCALIZE_PX:
                found += 1
        recall = found / len(layout.boxes) if layout.boxes else 1.0
        fp = 0
        for cid in range(len(CLASS_COLORS)):
            allowed = np.zeros((H, W), dtype=bool)
            for box in layout.boxes:
                if box.class_id == cid:
                    allowed |= _dilate_mask(_box_mask(box, H, W), int(LOCALIZE_PX))
            dist = np.linalg.norm(img - CLASS_COLORS[cid][:, None, None], axis=0)
            stray = (dist < COLOR_TOLERANCE) & ~allowed
            if stray.sum() > FP_PIXEL_THRESHOLD:
                fp += 1
        recalls.append(recall)
        fps.append(fp)
        errors.append(frame_errors)
    score = float(np.mean([r / (1 + f) for r, f in zip(recalls, fps)]))
    return AdherenceReport(
        per_frame_recall=recalls,
        per_frame_false_positives=fps,
        per_frame_box_errors=errors,
        score=score,
    )


# ---------------------------------------------------------------------------
# Memory benchmark
# ---------------------------------------------------------------------------

def memory_benchmark(
    sampler: str,
    clip_length: int,
    batch_size: int = 1,
    latent_shape: tuple[int, int, int] = (4, 16, 16),
    image_size: int = 64,
    seed: int = 0,
) -> int:
    """Peak logical working set (bytes of live latents) of one training epoch.

    ``streaming`` counts in-flight batch items plus cache entries; the
    ``sliding_window`` reference materializes every frame of a clip at once.
    """
    if sampler not in ("streaming", "sliding_window"):
        raise ConfigurationError(f"unknown sampler kind {sampler!r}")
    scene = synthesize_scene(seed, max(clip_length, 2), image_size)
    scene.frames = scene.frames[:clip_length] if clip_length >= 2 else scene.frames[:2]
    if clip_length == 1:
        scene.frames = scene.frames[:1]
        clips = [ClipRecord(clip_id="bench/0", scene_seed=seed, frames=scene.frames)]
    else:
        clips = make_clips([scene], 1)

    latent_numel = int(np.prod(latent_shape))

    def fake_encode(img: np.ndarray) -> torch.Tensor:
        return torch.zeros(latent_shape)

    peak = 0
    if sampler == "streaming":
        s = StreamingSampler(clips, batch_size=batch_size, encoder=fake_encode, seed=seed)
        while True:
            try:
                items = s.next_batch()
            except EpochExhausted:
                break
            peak = max(peak, len(items) + s.live_latents)
            for item in items:
                s.update_cache(item.clip_id, item.frame_index, torch.zeros(latent_shape))
            peak = max(peak, len(items) + s.live_latents)
    else:
        s = SlidingWindowSampler(clips, encoder=fake_encode)
        while True:
            try:
                window = s.next_window()
            except EpochExhausted:
                break
            peak = max(peak, len(window))
    return peak * latent_numel * 4
