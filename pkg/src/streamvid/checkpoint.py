"""Versioned checkpoint container shared by the codec and denoiser.

A checkpoint is a single file holding a format version, a ``kind`` tag, the
model's config header (plain dict) and its named weight arrays. Training
state checkpoints additionally carry optimizer/rng/sampler state under
``extra``.
"""

from __future__ import annotations

from pathlib import Path

import torch

FORMAT_VERSION = 1


def save_checkpoint(path: Path, kind: str, config: dict, state: dict, extra: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "state": state,
    }
    if extra is not None:
        payload["extra"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: Path, expect_kind: str | None = None) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
    if expect_kind is not None and payload.get("kind") != expect_kind:
        raise ValueError(f"{path}: expected kind {expect_kind!r}, found {payload.get('kind')!r}")
    return payload
