"""Synthetic driving-like scenes: dataset synthesis, layout schema, rasterization, edits.

A scene is a short clip of frames over a scrolling road background. Each
frame has a symbolic layout (colored boxes with velocities, lane polylines,
per-frame ego motion) and a rendered RGB image. The same layout JSON schema
is used for dataset files on disk and as the generation-service wire format.

Everything here is deterministic: same seed, same bytes.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

# 10 object classes, colors chosen mutually distant so class identity can be
# verified from pixels alone.
CLASS_COLORS = np.array(
    [
        [0.90, 0.10, 0.10],  # 0 red
        [0.10, 0.80, 0.10],  # 1 green
        [0.15, 0.20, 0.95],  # 2 blue
        [0.95, 0.90, 0.10],  # 3 yellow
        [0.90, 0.10, 0.90],  # 4 magenta
        [0.10, 0.90, 0.90],  # 5 cyan
        [0.95, 0.55, 0.10],  # 6 orange
        [0.55, 0.10, 0.90],  # 7 purple
        [0.45, 0.90, 0.55],  # 8 mint
        [0.90, 0.45, 0.60],  # 9 pink
    ],
    dtype=np.float64,
)
NUM_CLASSES = 10
MAX_BOXES = 32

LANE_TYPES = ("lane_divider", "road_boundary", "crossing")
LANE_COLORS = {
    "lane_divider": np.array([0.95, 0.95, 0.95]),
    "road_boundary": np.array([0.75, 0.75, 0.55]),
    "crossing": np.array([0.65, 0.65, 0.70]),
}
BACKGROUND_COLOR = np.array([0.30, 0.30, 0.32])

# Ego motion is expressed in normalized image units per frame; this bound maps
# it onto the [-1, 1] range of the control raster's ego channels.
EGO_MAX = 0.05

# Control raster channel layout: 10 class occupancy + 1 depth proxy
# + 3 map-element channels + 2 constant ego-motion channels.
RASTER_CHANNELS = NUM_CLASSES + 1 + len(LANE_TYPES) + 2
DEPTH_CHANNEL = NUM_CLASSES
LANE_CHANNEL = {name: NUM_CLASSES + 1 + i for i, name in enumerate(LANE_TYPES)}
EGO_CHANNELS = (RASTER_CHANNELS - 2, RASTER_CHANNELS - 1)

LAYOUT_FORMAT_VERSION = 1


class LayoutValidationError(ValueError):
    """Raised for malformed layout records; ``fields`` names the offenders."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid layout: " + "; ".join(errors))
        self.fields = errors


@dataclass
class Box:
    class_id: int
    center: tuple[float, float]
    size: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)


@dataclass
class Lane:
    element_type: str
    points: list[tuple[float, float]]


@dataclass
class FrameLayout:
    boxes: list[Box] = field(default_factory=list)
    lanes: list[Lane] = field(default_factory=list)
    ego_motion: tuple[float, float] = (0.0, 0.0)


@dataclass
class SceneRecord:
    scene_id: str
    scene_seed: int
    frames: list[tuple[np.ndarray, FrameLayout]]  # (3,S,S) float image, layout


@dataclass
class ClipRecord:
    clip_id: str
    scene_seed: int
    frames: list[tuple[np.ndarray, FrameLayout]]
    # Last frame of the preceding chunk of the same scene, when one exists;
    # used as the reference image for simulator-style first-frame priors.
    prev_boundary: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

def layout_to_json(layout: FrameLayout) -> dict:
    return {
        "boxes": [
            {
                "class_id": b.class_id,
                "center": [float(b.center[0]), float(b.center[1])],
                "size": [float(b.size[0]), float(b.size[1])],
                "velocity": [float(b.velocity[0]), float(b.velocity[1])],
            }
            for b in layout.boxes
        ],
        "lanes": [
            {
                "element_type": ln.element_type,
                "points": [[float(x), float(y)] for x, y in ln.points],
            }
            for ln in layout.lanes
        ],
        "ego_motion": [float(layout.ego_motion[0]), float(layout.ego_motion[1])],
    }


def validate_layout_json(obj) -> list[str]:
    """Schema check returning a list of error strings naming offending fields."""
    errors: list[str] = []
    if not isinstance(obj, dict):
        return ["layout: expected an object"]

    def _pair(value, name, lo=None, hi=None):
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        ):
            errors.append(f"{name}: expected a pair of numbers")
            return
        if lo is not None and not all(lo <= v <= hi for v in value):
            errors.append(f"{name}: values must lie in [{lo}, {hi}]")

    boxes = obj.get("boxes", [])
    if not isinstance(boxes, list):
        errors.append("boxes: expected a list")
        boxes = []
    if len(boxes) > MAX_BOXES:
        errors.append(f"boxes: at most {MAX_BOXES} boxes per frame")
    for i, b in enumerate(boxes):
        if not isinstance(b, dict):
            errors.append(f"boxes[{i}]: expected an object")
            continue
        cid = b.get("class_id")
        if not isinstance(cid, int) or isinstance(cid, bool) or not 0 <= cid < NUM_CLASSES:
            errors.append(f"boxes[{i}].class_id: expected an integer in [0, {NUM_CLASSES - 1}]")
        _pair(b.get("center"), f"boxes[{i}].center", 0.0, 1.0)
        _pair(b.get("size"), f"boxes[{i}].size", 0.0, 1.0)
        if "velocity" in b:
            _pair(b.get("velocity"), f"boxes[{i}].velocity")
    lanes = obj.get("lanes", [])
    if not isinstance(lanes, list):
        errors.append("lanes: expected a list")
        lanes = []
    for i, ln in enumerate(lanes):
        if not isinstance(ln, dict):
            errors.append(f"lanes[{i}]: expected an object")
            continue
        if ln.get("element_type") not in LANE_TYPES:
            errors.append(f"lanes[{i}].element_type: expected one of {list(LANE_TYPES)}")
        pts = ln.get("points")
        if not isinstance(pts, list) or len(pts) < 2:
            errors.append(f"lanes[{i}].points: expected a list of >= 2 points")
        else:
            for j, p in enumerate(pts):
                if (
                    not isinstance(p, (list, tuple))
                    or len(p) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)
                ):
                    errors.append(f"lanes[{i}].points[{j}]: expected a pair of numbers")
    _pair(obj.get("ego_motion", [0.0, 0.0]), "ego_motion")
    return errors


def layout_from_json(obj) -> FrameLayout:
    errors = validate_layout_json(obj)
    if errors:
        raise LayoutValidationError(errors)
    boxes = [
        Box(
            class_id=b["class_id"],
            center=(b["center"][0], b["center"][1]),
            size=(b["size"][0], b["size"][1]),
            velocity=tuple(b.get("velocity", [0.0, 0.0])),
        )
        for b in obj.get("boxes", [])
    ]
    lanes = [
        Lane(element_type=ln["element_type"], points=[(p[0], p[1]) for p in ln["points"]])
        for ln in obj.get("lanes", [])
    ]
    ego = tuple(obj.get("ego_motion", [0.0, 0.0]))
    return FrameLayout(boxes=boxes, lanes=lanes, ego_motion=ego)


# ---------------------------------------------------------------------------
# Kinematics and synthesis
# ---------------------------------------------------------------------------

def advance_layout(layout: FrameLayout) -> FrameLayout:
    """Next frame's layout: boxes move by velocity + ego, lanes scroll by ego."""
    dx, dy = layout.ego_motion
    boxes = [
        Box(
            class_id=b.class_id,
            center=(
                float(np.clip(b.center[0] + b.velocity[0] + dx, 0.0, 1.0)),
                float(np.clip(b.center[1] + b.velocity[1] + dy, 0.0, 1.0)),
            ),
            size=b.size,
            velocity=b.velocity,
        )
        for b in layout.boxes
    ]
    lanes = [
        Lane(
            element_type=ln.element_type,
            points=[(x + dx, y + dy) for x, y in ln.points],
        )
        for ln in layout.lanes
    ]
    return FrameLayout(boxes=boxes, lanes=lanes, ego_motion=layout.ego_motion)


def _initial_layout(rng: np.random.Generator) -> FrameLayout:
    lanes = [
        Lane("road_boundary", [(0.08, -0.5), (0.08, 1.5)]),
        Lane("road_boundary", [(0.92, -0.5), (0.92, 1.5)]),
        Lane("lane_divider", [(0.5, -0.5), (0.5, 1.5)]),
    ]
    if rng.random() < 0.5:
        cy = float(rng.uniform(0.2, 0.8))
        lanes.append(Lane("crossing", [(0.08, cy), (0.92, cy)]))
    n_boxes = int(rng.integers(1, 5))
    boxes = []
    for _ in range(n_boxes):
        boxes.append(
            Box(
                class_id=int(rng.integers(0, NUM_CLASSES)),
                center=(float(rng.uniform(0.18, 0.82)), float(rng.uniform(0.18, 0.82))),
                size=(float(rng.uniform(0.12, 0.28)), float(rng.uniform(0.12, 0.28))),
                velocity=(float(rng.uniform(-0.02, 0.02)), float(rng.uniform(-0.02, 0.02))),
            )
        )
    ego = (float(rng.uniform(-0.01, 0.01)), float(rng.uniform(0.0, 0.02)))
    return FrameLayout(boxes=boxes, lanes=lanes, ego_motion=ego)


def _pixel_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def _box_mask(box: Box, H: int, W: int) -> np.ndarray:
    """Occupancy mask by the pixel-center-in-rectangle rule."""
    cx, cy = box.center
    w, h = box.size
    xs = _pixel_centers(W)
    ys = _pixel_centers(H)
    in_x = (xs >= cx - w / 2) & (xs <= cx + w / 2)
    in_y = (ys >= cy - h / 2) & (ys <= cy + h / 2)
    return np.outer(in_y, in_x)


def _draw_polyline(mask: np.ndarray, points: list[tuple[float, float]]) -> None:
    """Mark the 1-pixel-wide trace of a polyline on ``mask`` (H,W) in place."""
    H, W = mask.shape
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        n = 4 * max(H, W)
        ts = np.linspace(0.0, 1.0, n)
        xs = x0 + ts * (x1 - x0)
        ys = y0 + ts * (y1 - y0)
        cols = np.floor(xs * W).astype(int)
        rows = np.floor(ys * H).astype(int)
        ok = (cols >= 0) & (cols < W) & (rows >= 0) & (rows < H)
        mask[rows[ok], cols[ok]] = 1.0


def render_frame(layout: FrameLayout, image_size: int) -> np.ndarray:
    """Render the layout into a (3, S, S) float image in [0, 1]."""
    S = image_size
    img = np.tile(BACKGROUND_COLOR[:, None, None], (1, S, S)).astype(np.float64)
    for lane in layout.lanes:
        mask = np.zeros((S, S))
        _draw_polyline(mask, lane.points)
        img[:, mask > 0] = LANE_COLORS[lane.element_type][:, None]
    # Far (large) boxes first so nearer (smaller) boxes paint on top.
    for box in sorted(layout.boxes, key=lambda b: -(b.size[0] * b.size[1])):
        mask = _box_mask(box, S, S)
        img[:, mask] = CLASS_COLORS[box.class_id][:, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def rasterize_layout(layout: FrameLayout, latent_hw: tuple[int, int]) -> np.ndarray:
    """Rasterize a layout into the (16, H, W) control raster."""
    H, W = latent_hw
    raster = np.zeros((RASTER_CHANNELS, H, W), dtype=np.float32)
    for box in layout.boxes:
        mask = _box_mask(box, H, W)
        raster[box.class_id][mask] = 1.0
        closeness = float(np.clip(1.0 - box.size[0] * box.size[1], 0.0, 1.0))
        raster[DEPTH_CHANNEL][mask] = np.maximum(raster[DEPTH_CHANNEL][mask], closeness)
    for lane in layout.lanes:
        _draw_polyline(raster[LANE_CHANNEL[lane.element_type]], lane.points)
    dx, dy = layout.ego_motion
    raster[EGO_CHANNELS[0]].fill(float(np.clip(dx / EGO_MAX, -1.0, 1.0)))
    raster[EGO_CHANNELS[1]].fill(float(np.clip(dy / EGO_MAX, -1.0, 1.0)))
    return raster


# ---------------------------------------------------------------------------
# Layout edits (used by the simulator service and UI)
# ---------------------------------------------------------------------------

def apply_edit(layout: FrameLayout, edit: dict) -> FrameLayout:
    """Apply one edit and return a new layout; the input is never mutated."""
    out = copy.deepcopy(layout)
    op = edit.get("op")
    if op == "add_box":
        box = edit.get("box")
        errs = validate_layout_json({"boxes": [box], "lanes": [], "ego_motion": [0, 0]})
        if errs:
            raise LayoutValidationError([e.replace("boxes[0]", "box") for e in errs])
        if len(out.boxes) >= MAX_BOXES:
            raise LayoutValidationError([f"boxes: at most {MAX_BOXES} boxes per frame"])
        out.boxes.append(
            Box(
                class_id=box["class_id"],
                center=tuple(box["center"]),
                size=tuple(box["size"]),
                velocity=tuple(box.get("velocity", [0.0, 0.0])),
            )
        )
    elif op == "remove_box":
        idx = edit.get("index")
        if not isinstance(idx, int) or not 0 <= idx < len(out.boxes):
            raise LayoutValidationError([f"index: no box at index {idx!r}"])
        del out.boxes[idx]
    elif op == "move_box":
        idx = edit.get("index")
        if not isinstance(idx, int) or not 0 <= idx < len(out.boxes):
            raise LayoutValidationError([f"index: no box at index {idx!r}"])
        center = edit.get("center")
        if (
            not isinstance(center, (list, tuple))
            or len(center) != 2
            or not all(isinstance(v, (int, float)) for v in center)
            or not all(0.0 <= v <= 1.0 for v in center)
        ):
            raise LayoutValidationError(["center: expected a pair in [0, 1]"])
        out.boxes[idx].center = (float(center[0]), float(center[1]))
    elif op == "set_ego":
        ego = edit.get("ego_motion")
        if (
            not isinstance(ego, (list, tuple))
            or len(ego) != 2
            or not all(isinstance(v, (int, float)) for v in ego)
        ):
            raise LayoutValidationError(["ego_motion: expected a pair of numbers"])
        out.ego_motion = (float(ego[0]), float(ego[1]))
    else:
        raise LayoutValidationError([f"op: unknown edit operation {op!r}"])
    return out


# ---------------------------------------------------------------------------
# Dataset synthesis and I/O
# ---------------------------------------------------------------------------

def save_png(img: np.ndarray, path: Path) -> None:
    arr = np.clip(img, 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path: Path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def synthesize_scene(scene_seed: int, frames: int, image_size: int) -> SceneRecord:
    if frames < 2:
        raise ValueError("a scene needs at least 2 frames")
    rng = np.random.default_rng(scene_seed)
    layout = _initial_layout(rng)
    out: list[tuple[np.ndarray, FrameLayout]] = []
    for _ in range(frames):
        out.append((render_frame(layout, image_size), layout))
        layout = advance_layout(layout)
    return SceneRecord(scene_id=f"scene_{scene_seed}", scene_seed=scene_seed, frames=out)


def synthesize_dataset(
    out_dir: Path,
    scenes: int,
    frames_per_scene: int,
    image_size: int,
    seed: int,
) -> list[Path]:
    """Write per-scene directories of PNG frames plus one layouts.json each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_dirs = []
    for i in range(scenes):
        scene_seed = seed ^ i
        rec = synthesize_scene(scene_seed, frames_per_scene, image_size)
        sdir = out_dir / f"scene_{i:03d}"
        sdir.mkdir(parents=True, exist_ok=True)
        for f, (img, _) in enumerate(rec.frames):
            save_png(img, sdir / f"frame_{f:03d}.png")
        doc = {
            "format_version": LAYOUT_FORMAT_VERSION,
            "scene_seed": scene_seed,
            "frames": [layout_to_json(layout) for _, layout in rec.frames],
        }
        (sdir / "layouts.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
        scene_dirs.append(sdir)
    return scene_dirs


def load_dataset(root: Path) -> list[SceneRecord]:
    root = Path(root)
    records = []
    for sdir in sorted(p for p in root.iterdir() if p.is_dir()):
        doc = json.loads((sdir / "layouts.json").read_text())
        if doc.get("format_version") != LAYOUT_FORMAT_VERSION:
            raise ValueError(f"{sdir}: unsupported layout file version")
        layouts = [layout_from_json(o) for o in doc["frames"]]
        frames = []
        for f, layout in enumerate(layouts):
            frames.append((load_png(sdir / f"frame_{f:03d}.png"), layout))
        records.append(SceneRecord(scene_id=sdir.name, scene_seed=doc["scene_seed"], frames=frames))
    if not records:
        raise ValueError(f"no scenes found under {root}")
    return records
