"""In-order clip sampling for video training, with a cross-iteration latent cache.

Each clip's frames are emitted one per iteration in temporal order; the
trainer writes the denoised latent of the frame it just processed back into
the cache, and the sampler hands it out as the noise prior for that clip's
next frame. Live cache entries never exceed the batch size, whatever the
clip length; that bounded-memory behavior is what the memory benchmark
measures against a sliding-window reference sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch
from torch import Tensor

from .noise_prior import NoisePrior, make_prior
from .scenes import ClipRecord, FrameLayout, SceneRecord
from .scheduler import BetaSchedule


class EpochExhausted(Exception):
    """Raised by next_batch when every clip of the epoch has been consumed."""


class SamplerStateError(RuntimeError):
    """Out-of-order cache update or missing prior source."""


@dataclass
class TrainBatchItem:
    clip_id: str
    frame_index: int  # 1-based within the clip
    image: np.ndarray
    layout: FrameLayout
    prior: NoisePrior


def make_clips(scenes: list[SceneRecord], chunks_per_video: int) -> list[ClipRecord]:
    """Split each scene into contiguous, near-equal chunks (length diff <= 1)."""
    if chunks_per_video < 1:
        raise ValueError("chunks_per_video must be >= 1")
    clips: list[ClipRecord] = []
    for scene in scenes:
        n = len(scene.frames)
        if chunks_per_video > n:
            raise ValueError(
                f"{scene.scene_id}: cannot split {n} frames into {chunks_per_video} chunks"
            )
        base, extra = divmod(n, chunks_per_video)
        start = 0
        prev_boundary = None
        for c in range(chunks_per_video):
            length = base + (1 if c < extra else 0)
            frames = scene.frames[start : start + length]
            clips.append(
                ClipRecord(
                    clip_id=f"{scene.scene_id}/chunk{c}",
                    scene_seed=scene.scene_seed,
                    frames=frames,
                    prev_boundary=prev_boundary,
                )
            )
            prev_boundary = frames[-1][0]
            start += length
    return clips


@dataclass
class _Cursor:
    clip_index: int
    next_frame: int  # 1-based


class StreamingSampler:
    """Single-writer sampler state: cursors, shuffled clip queue, latent cache."""

    def __init__(
        self,
        clips: list[ClipRecord],
        batch_size: int,
        encoder: Callable[[np.ndarray], Tensor],
        seed: int = 0,
        strategy: str = "denoised_latent",
        frame1_gaussian_prob: float = 0.5,
        epsilon: float = 1e-5,
        sched: Optional[BetaSchedule] = None,
        t_noise: Optional[int] = None,
    ):
        if not clips:
            raise ValueError("no clips")
        self.clips = clips
        self.batch_size = batch_size
        self.encoder = encoder
        self.strategy = strategy
        self.frame1_gaussian_prob = frame1_gaussian_prob
        self.epsilon = epsilon
        self.sched = sched
        self.t_noise = t_noise
        self._np_rng = np.random.default_rng(seed)
        self._torch_rng = torch.Generator().manual_seed(seed)
        self._queue: list[int] = list(self._np_rng.permutation(len(clips)))
        self._active: dict[str, _Cursor] = {}
        self._cache: dict[str, tuple[int, Tensor]] = {}
        self._last_emitted: dict[str, int] = {}
        self.peak_live_latents = 0

    # -- introspection -----------------------------------------------------

    @property
    def live_latents(self) -> int:
        return len(self._cache)

    def cache_entry(self, clip_id: str) -> tuple[int, Tensor] | None:
        return self._cache.get(clip_id)

    # -- emission ----------------------------------------------------------

    def _frame1_prior(self, clip: ClipRecord, image: np.ndarray) -> NoisePrior:
        latent_shape = tuple(self.encoder(image).shape)
        if self._np_rng.random() < self.frame1_gaussian_prob:
            return make_prior(
                None, latent_shape, "generator", self.strategy,
                rng=self._torch_rng, epsilon=self.epsilon, frame_index=1,
            )
        source = clip.prev_boundary if clip.prev_boundary is not None else image
        return make_prior(
            self.encoder(source), latent_shape, "simulator", self.strategy,
            epsilon=self.epsilon, frame_index=1,
        )

    def _later_prior(self, clip: ClipRecord, frame_index: int) -> NoisePrior:
        if self.strategy == "denoised_latent":
            entry = self._cache.get(clip.clip_id)
            if entry is None or entry[0] != frame_index - 1:
                raise SamplerStateError(
                    f"{clip.clip_id}: no cached latent for frame {frame_index - 1}"
                )
            source = entry[1]
        else:
            source = self.encoder(clip.frames[frame_index - 2][0])
        return make_prior(
            source, tuple(source.shape), "generator", self.strategy,
            sched=self.sched, t_noise=self.t_noise, rng=self._torch_rng,
            epsilon=self.epsilon, frame_index=frame_index,
        )

    def next_batch(self) -> list[TrainBatchItem]:
        while len(self._active) < self.batch_size and self._queue:
            ci = self._queue.pop(0)
            self._active[self.clips[ci].clip_id] = _Cursor(clip_index=ci, next_frame=1)
        if not self._active:
            raise EpochExhausted
        items: list[TrainBatchItem] = []
        retired: list[str] = []
        for clip_id, cursor in self._active.items():
            clip = self.clips[cursor.clip_index]
            image, layout = clip.frames[cursor.next_frame - 1]
            if cursor.next_frame == 1:
                prior = self._frame1_prior(clip, image)
            else:
                prior = self._later_prior(clip, cursor.next_frame)
            items.append(
                TrainBatchItem(
                    clip_id=clip_id, frame_index=cursor.next_frame,
                    image=image, layout=layout, prior=prior,
                )
            )
            self._last_emitted[clip_id] = cursor.next_frame
            cursor.next_frame += 1
            if cursor.next_frame > len(clip):
                retired.append(clip_id)
        for clip_id in retired:
            del self._active[clip_id]
        return items

    # -- cache -------------------------------------------------------------

    def update_cache(self, clip_id: str, frame_index: int, denoised: Tensor) -> None:
        last = self._last_emitted.get(clip_id)
        if last != frame_index:
            raise SamplerStateError(
                f"{clip_id}: cache update for frame {frame_index}, last emitted was {last}"
            )
        clip = next(c for c in self.clips if c.clip_id == clip_id)
        if frame_index >= len(clip):
            # The clip just finished; its prior is never needed again.
            self._cache.pop(clip_id, None)
            return
        self._cache[clip_id] = (frame_index, denoised.detach().clone())
        self.peak_live_latents = max(self.peak_live_latents, len(self._cache))

    # -- persistence -------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "np_rng": self._np_rng.bit_generator.state,
            "torch_rng": self._torch_rng.get_state(),
            "queue": list(self._queue),
            "active": {k: (v.clip_index, v.next_frame) for k, v in self._active.items()},
            "cache": {k: (i, z.clone()) for k, (i, z) in self._cache.items()},
            "last_emitted": dict(self._last_emitted),
            "peak_live_latents": self.peak_live_latents,
        }

    def load_state_dict(self, state: dict) -> None:
        self._np_rng.bit_generator.state = state["np_rng"]
        self._torch_rng.set_state(state["torch_rng"])
        self._queue = list(state["queue"])
        self._active = {k: _Cursor(*v) for k, v in state["active"].items()}
        self._cache = {k: (i, z.clone()) for k, (i, z) in state["cache"].items()}
        self._last_emitted = dict(state["last_emitted"])
        self.peak_live_latents = state["peak_live_latents"]


class SlidingWindowSampler:
    """Reference sampler that materializes a whole clip per iteration.

    Exists solely so the memory benchmark has something to compare against:
    its live latent count grows linearly with clip length.
    """

    def __init__(self, clips: list[ClipRecord], encoder: Callable[[np.ndarray], Tensor]):
        self.clips = list(clips)
        self.encoder = encoder
        self._next = 0
        self.peak_live_latents = 0

    def next_window(self) -> list[tuple[np.ndarray, FrameLayout, Tensor]]:
        if self._next >= len(self.clips):
            raise EpochExhausted
        clip = self.clips[self._next]
        self._next += 1
        window = [(img, layout, self.encoder(img)) for img, layout in clip.frames]
        self.peak_live_latents = max(self.peak_live_latents, len(window))
        return window
