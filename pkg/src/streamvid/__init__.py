"""Streaming latent video diffusion on synthetic driving-style scenes.

The package covers the full desk-scale pipeline: synthetic scene data,
a small image autoencoder, a diffusion noise schedule, a layout-conditioned
denoiser, noise-prior propagation between frames, a streaming training
sampler with a bounded latent cache, two-stage training, frame-by-frame
generation, evaluation metrics, and an HTTP generation service.
"""

from .codec import CodecConfig, LatentCodec, load_codec, save_codec, train_codec
from .denoiser import Denoiser, DenoiserConfig, count_parameters, load_denoiser, save_denoiser
from .errors import ConfigurationError, PreconditionError
from .generate import GenConfig, StreamState, begin_stream, generate_clip, step_stream
from .noise_prior import NoisePrior, STRATEGIES, make_prior, normalize_prior
from .scenes import (
    Box,
    ClipRecord,
    FrameLayout,
    Lane,
    SceneRecord,
    advance_layout,
    apply_edit,
    layout_from_json,
    layout_to_json,
    load_dataset,
    rasterize_layout,
    render_frame,
    synthesize_dataset,
    synthesize_scene,
    validate_layout_json,
)
from .scheduler import (
    BetaSchedule,
    cfg_combine,
    ddim_step,
    ddim_timesteps,
    make_schedule,
    predict_z0,
    q_sample,
)
from .stream_sampler import (
    EpochExhausted,
    SlidingWindowSampler,
    StreamingSampler,
    TrainBatchItem,
    make_clips,
)
from .trainer import TrainConfig, TrainingDiverged, run_training

__version__ = "0.1.0"
