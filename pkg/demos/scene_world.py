"""Render a synthetic scene, apply layout edits, and save a frame strip.

Shows the toy world without any trained weights: a scene is synthesized,
its layout advanced by the kinematics, then edited (a box removed and the
ego motion changed) before re-rendering.

    python demos/scene_world.py --out /tmp/scene_demo
"""

import argparse
from pathlib import Path

from streamvid.scenes import apply_edit, render_frame, save_png, synthesize_scene


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("scene_demo"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    scene = synthesize_scene(args.seed, frames=8, image_size=64)
    for i, (img, _) in enumerate(scene.frames):
        save_png(img, args.out / f"frame_{i:03d}.png")

    layout = scene.frames[-1][1]
    print(f"scene {scene.scene_id}: {len(layout.boxes)} boxes, "
          f"{len(layout.lanes)} lane elements")

    edited = layout
    if edited.boxes:
        edited = apply_edit(edited, {"op": "remove_box", "index": 0})
    edited = apply_edit(edited, {"op": "set_ego", "ego_motion": [0.02, 0.01]})
    save_png(render_frame(edited, 64), args.out / "edited.png")
    print(f"wrote {len(scene.frames)} frames and edited.png to {args.out}")


if __name__ == "__main__":
    main()
