/**
 * Layout canvas: draws the editable layout over the latest generated frame
 * and turns pointer gestures into editor-state mutations (select, drag-move,
 * shift-drag resize).
 */

import { EditorState } from "./editor.js";
import { Box, Lane } from "./schema.js";

const CLASS_COLORS = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
];

const LANE_COLORS: Record<Lane["element_type"], string> = {
  lane_divider: "#ffd700",
  road_boundary: "#ffffff",
  crossing: "#87cefa",
};

export class LayoutCanvas {
  private dragging: number | null = null;
  private resizing = false;
  onChange: () => void = () => {};

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly state: EditorState,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", () => this.pointerUp());
    canvas.addEventListener("pointercancel", () => this.pointerUp());
  }

  private toFrame(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      (e.clientX - rect.left) / rect.width,
      (e.clientY - rect.top) / rect.height,
    ];
  }

  private hitBox(x: number, y: number): number | null {
    const boxes = this.state.layout.boxes;
    for (let i = boxes.length - 1; i >= 0; i--) {
      const b = boxes[i];
      if (b === undefined) continue;
      if (
        Math.abs(x - b.center[0]) <= b.size[0] / 2 &&
        Math.abs(y - b.center[1]) <= b.size[1] / 2
      ) {
        return i;
      }
    }
    return null;
  }

  private pointerDown(e: PointerEvent): void {
    const [x, y] = this.toFrame(e);
    const hit = this.hitBox(x, y);
    this.state.selectedBox = hit;
    this.dragging = hit;
    this.resizing = e.shiftKey;
    this.canvas.setPointerCapture(e.pointerId);
    this.draw();
  }

  private pointerMove(e: PointerEvent): void {
    if (this.dragging === null) return;
    const [x, y] = this.toFrame(e);
    if (this.resizing) {
      const box = this.state.layout.boxes[this.dragging];
      if (box !== undefined) {
        this.state.resizeBox(
          this.dragging,
          Math.max(0.02, Math.abs(x - box.center[0]) * 2),
          Math.max(0.02, Math.abs(y - box.center[1]) * 2),
        );
      }
    } else {
      this.state.moveBox(this.dragging, x, y);
    }
    this.onChange();
    this.draw();
  }

  private pointerUp(): void {
    this.dragging = null;
    this.resizing = false;
  }

  drawBackdrop(image: CanvasImageSource | null): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (image !== null) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(image, 0, 0, this.canvas.width, this.canvas.height);
    } else {
      ctx.fillStyle = "#30343a";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    }
  }

  draw(backdrop: CanvasImageSource | null = null): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) return;
    const W = this.canvas.width;
    const H = this.canvas.height;
    this.drawBackdrop(backdrop);

    for (const lane of this.state.layout.lanes) {
      ctx.strokeStyle = LANE_COLORS[lane.element_type];
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      lane.points.forEach(([x, y], i) => {
        if (i === 0) ctx.moveTo(x * W, y * H);
        else ctx.lineTo(x * W, y * H);
      });
      ctx.stroke();
    }

    this.state.layout.boxes.forEach((box: Box, i: number) => {
      const x = (box.center[0] - box.size[0] / 2) * W;
      const y = (box.center[1] - box.size[1] / 2) * H;
      ctx.strokeStyle = CLASS_COLORS[box.class_id % CLASS_COLORS.length] ?? "#fff";
      ctx.lineWidth = i === this.state.selectedBox ? 3 : 1.5;
      ctx.strokeRect(x, y, box.size[0] * W, box.size[1] * H);
    });
  }
}
