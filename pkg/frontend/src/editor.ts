/**
 * Client-side editor state: a schema-valid layout mirror plus the editing
 * primitives the canvas and panels call. Edits mutate only this state; the
 * layout leaves the browser exactly once per Step, as validated JSON.
 */

import { Box, Layout, MAX_BOXES, parseLayout, validateLayout } from "./schema.js";

export interface FrameRecord {
  frameIndex: number;
  framePng: string; // base64, exactly as returned by the API
  priorOrigin: string;
}

export type ConnectionStatus = "idle" | "stepping" | "session-gone" | "error";

const clamp01 = (v: number): number => Math.min(1, Math.max(0, v));

export class EditorState {
  layout: Layout;
  sessionId: string | null = null;
  selectedBox: number | null = null;
  history: FrameRecord[] = [];
  status: ConnectionStatus = "idle";
  lastError: string | null = null;

  constructor(initial?: unknown) {
    this.layout = initial === undefined ? parseLayout({}) : parseLayout(initial);
  }

  /** Deep copy for an outgoing request body; never hands out live state. */
  layoutJson(): Layout {
    return structuredClone(this.layout);
  }

  validationIssues(): string[] {
    return validateLayout(this.layout);
  }

  /** Step is allowed only with a live session, a valid layout, no request in flight. */
  canStep(): boolean {
    return (
      this.sessionId !== null &&
      this.status !== "stepping" &&
      this.status !== "session-gone" &&
      this.validationIssues().length === 0
    );
  }

  addBox(box: Box): void {
    if (this.layout.boxes.length >= MAX_BOXES) {
      throw new Error(`at most ${MAX_BOXES} boxes per frame`);
    }
    this.layout.boxes.push(structuredClone(box));
    this.selectedBox = this.layout.boxes.length - 1;
  }

  removeBox(index: number): void {
    if (index < 0 || index >= this.layout.boxes.length) {
      throw new Error(`no box at index ${index}`);
    }
    this.layout.boxes.splice(index, 1);
    this.selectedBox = null;
  }

  /** Drag handler target: center set from canvas coordinates, clamped to frame. */
  moveBox(index: number, cx: number, cy: number): void {
    const box = this.layout.boxes[index];
    if (box === undefined) throw new Error(`no box at index ${index}`);
    box.center = [clamp01(cx), clamp01(cy)];
  }

  resizeBox(index: number, w: number, h: number): void {
    const box = this.layout.boxes[index];
    if (box === undefined) throw new Error(`no box at index ${index}`);
    box.size = [clamp01(w), clamp01(h)];
  }

  setEgo(dx: number, dy: number): void {
    this.layout.ego_motion = [dx, dy];
  }

  pushFrame(record: FrameRecord): void {
    this.history.push(record);
  }
}

/**
 * Ego-motion profile for a lane change: a smooth lateral dx pulse over
 * `steps` frames while keeping the forward dy. The returned sequence is
 * applied one entry per Step, so the request log shows the programmed
 * dx values exactly.
 */
export function laneChangeProfile(
  steps: number,
  peakDx: number,
  dy: number,
): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let i = 0; i < steps; i++) {
    const phase = (i + 0.5) / steps;
    const dx = peakDx * Math.sin(Math.PI * phase) ** 2;
    out.push([Number(dx.toFixed(6)), dy]);
  }
  return out;
}
