"""Session-oriented generation service.

One session wraps one stream: create it (generator or simulator), then step
it layout by layout; each step returns the generated frame inline as a
base64 PNG. Steps on the same session are serialized by a per-session lock;
distinct sessions generate concurrently against the shared read-only model.
Layout request bodies use exactly the dataset layout JSON schema.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image as PILImage

from .codec import LatentCodec
from .config import GenerateCfg
from .denoiser import Denoiser
from .generate import GenConfig, StreamState, begin_stream, step_stream
from .scenes import (
    LayoutValidationError,
    apply_edit,
    layout_from_json,
    validate_layout_json,
)
from .scheduler import BetaSchedule


def _png_bytes(img: np.ndarray) -> bytes:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _decode_reference(b64: str) -> np.ndarray:
    raw = base64.b64decode(b64)
    pil = PILImage.open(io.BytesIO(raw)).convert("RGB")
    return (np.asarray(pil, dtype=np.float32) / 255.0).transpose(2, 0, 1)


@dataclass
class Session:
    session_id: str
    mode: str
    state: StreamState
    created_at: float
    last_active: float
    steps_done: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _error(status: int, code: str, message: str, **extra) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message, **extra}}
    )


def create_app(
    model: Denoiser,
    codec: LatentCodec,
    sched: BetaSchedule,
    defaults: GenerateCfg = GenerateCfg(),
    capacity: int = 8,
    ttl_seconds: float = 600.0,
    config_hash: str = "",
) -> FastAPI:
    app = FastAPI(title="streamvid generation service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def _expire_locked(now: float) -> None:
        for sid in [s for s, sess in sessions.items() if now - sess.last_active > ttl_seconds]:
            del sessions[sid]

    def _get(session_id: str) -> Session | None:
        with registry_lock:
            _expire_locked(time.time())
            return sessions.get(session_id)

    @app.get("/healthz")
    def healthz():
        with registry_lock:
            _expire_locked(time.time())
            count = len(sessions)
        return {"status": "ok", "sessions": count}

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        mode = body.get("mode")
        if mode not in ("generator", "simulator"):
            return _error(400, "invalid_mode", f"mode must be generator or simulator, got {mode!r}")
        reference_b64 = body.get("reference_image")
        if mode == "simulator" and not reference_b64:
            return _error(400, "missing_reference", "simulator mode requires reference_image")
        if mode == "generator" and reference_b64:
            return _error(400, "unexpected_reference", "generator mode takes no reference_image")
        overrides = body.get("overrides") or {}
        allowed = {"ddim_steps", "cfg_scale", "eta", "prior_strategy"}
        unknown = set(overrides) - allowed
        if unknown:
            return _error(400, "invalid_override", f"unknown override keys {sorted(unknown)}")
        gen = GenConfig(
            ddim_steps=overrides.get("ddim_steps", defaults.ddim_steps),
            cfg_scale=overrides.get("cfg_scale", defaults.cfg_scale),
            eta=overrides.get("eta", defaults.eta),
            mode=mode,
            seed=int(body.get("seed", defaults.seed)),
            prior_strategy=overrides.get("prior_strategy", defaults.strategy),
        )
        reference = None
        if reference_b64:
            try:
                reference = _decode_reference(reference_b64)
            except Exception:
                return _error(400, "invalid_reference", "reference_image is not a decodable image")
        with registry_lock:
            _expire_locked(time.time())
            if len(sessions) >= capacity:
                return _error(
                    429, "capacity_exceeded",
                    f"at most {capacity} concurrent sessions; retry after one expires",
                    retry_after_seconds=ttl_seconds,
                )
            state = begin_stream(model, codec, gen, reference)
            sid = uuid.uuid4().hex
            now = time.time()
            sessions[sid] = Session(
                session_id=sid, mode=mode, state=state, created_at=now, last_active=now
            )
        return {"session_id": sid, "mode": mode, "frame_index": 0}

    @app.post("/sessions/{session_id}/step")
    async def step(session_id: str, request: Request):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "session_not_found", f"no session {session_id}")
        body = await request.json()
        layout_doc = body.get("layout")
        errors = validate_layout_json(layout_doc)
        if errors:
            return _error(400, "invalid_layout", "layout failed validation", fields=errors)
        layout = layout_from_json(layout_doc)
        for edit in body.get("edits") or []:
            try:
                layout = apply_edit(layout, edit)
            except LayoutValidationError as exc:
                return _error(400, "invalid_edit", "edit failed validation", fields=exc.fields)
        with sess.lock:
            if _get(session_id) is None:
                return _error(410, "session_expired", "session expired mid-request")
            t0 = time.time()
            img, _ = step_stream(model, codec, sched, sess.state, layout)
            sess.steps_done += 1
            sess.last_active = time.time()
            frame_index = sess.steps_done
            origin = sess.state.last_prior_origin
        return {
            "frame_index": frame_index,
            "frame_png": base64.b64encode(_png_bytes(img)).decode(),
            "wall_time": time.time() - t0,
            "prior_origin": origin,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "session_not_found", f"no session {session_id}")
        return {
            "session_id": sess.session_id,
            "mode": sess.mode,
            "frames_generated": sess.steps_done,
            "created_at": sess.created_at,
            "config_hash": config_hash,
        }

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            sessions.pop(session_id, None)
        return {"deleted": True, "session_id": session_id}

    return app
