"""Steered simulator-mode generation with a mid-clip layout edit.

Loads checkpoints produced by the CLI quickstart

    streamvid synth-data
    streamvid train --stage codec
    streamvid train --stage image
    streamvid train --stage video

then seeds a stream from a real first frame, advances the layout for a few
steps, removes the first box halfway through, and writes the frames.

    python demos/steered_generation.py --runs runs --out /tmp/steered
"""

import argparse
from pathlib import Path

from streamvid.codec import load_codec
from streamvid.denoiser import load_denoiser
from streamvid.generate import GenConfig, begin_stream, step_stream
from streamvid.scenes import advance_layout, apply_edit, load_dataset, save_png
from streamvid.scheduler import make_schedule


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=Path, default=Path("runs"))
    ap.add_argument("--out", type=Path, default=Path("steered"))
    ap.add_argument("--frames", type=int, default=8)
    ap.add_argument("--ddim-steps", type=int, default=25)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    codec = load_codec(args.runs / "codec.pt")
    model = load_denoiser(args.runs / "train" / "video_latest.pt")
    sched = make_schedule(1000)
    scene = load_dataset(args.runs / "data")[0]

    reference, layout = scene.frames[0]
    cfg = GenConfig(ddim_steps=args.ddim_steps, cfg_scale=5.0,
                    mode="simulator", seed=0)
    state = begin_stream(model, codec, cfg, reference=reference)

    for i in range(args.frames):
        if i == args.frames // 2 and layout.boxes:
            layout = apply_edit(layout, {"op": "remove_box", "index": 0})
            print(f"frame {i + 1}: removed box 0")
        img, state = step_stream(model, codec, sched, state, layout)
        save_png(img, args.out / f"frame_{i:03d}.png")
        print(f"frame {i + 1}: prior origin {state.last_prior_origin}")
        layout = advance_layout(layout)
    print(f"wrote {args.frames} frames to {args.out}")


if __name__ == "__main__":
    main()
