/**
 * Wiring for the steering console: session panel, layout canvas, Step
 * button, timeline. One session and at most one in-flight request at a
 * time; Step is disabled while a request is pending or the layout is
 * invalid, and a dead session flips the UI into a re-create state.
 */

import { ApiError, SteerClient } from "./client.js";
import { LayoutCanvas } from "./canvas.js";
import { EditorState } from "./editor.js";
import { Timeline } from "./timeline.js";
import { parseLayout } from "./schema.js";

export interface AppElements {
  canvas: HTMLCanvasElement;
  stepButton: HTMLButtonElement;
  createButton: HTMLButtonElement;
  deleteButton: HTMLButtonElement;
  modeSelect: HTMLSelectElement;
  referenceInput: HTMLInputElement;
  egoDx: HTMLInputElement;
  egoDy: HTMLInputElement;
  removeButton: HTMLButtonElement;
  statusLine: HTMLElement;
  issuesList: HTMLElement;
  frameView: HTMLImageElement;
  timelineRoot: HTMLElement;
}

export class SteerApp {
  readonly state: EditorState;
  readonly layoutCanvas: LayoutCanvas;
  readonly timeline: Timeline;

  constructor(
    private readonly client: SteerClient,
    private readonly el: AppElements,
    initialLayout?: unknown,
  ) {
    this.state = new EditorState(initialLayout);
    this.layoutCanvas = new LayoutCanvas(el.canvas, this.state);
    this.layoutCanvas.onChange = () => this.refresh();
    this.timeline = new Timeline(el.timelineRoot);
    this.timeline.onSelect = (rec) => {
      this.el.frameView.src = `data:image/png;base64,${rec.framePng}`;
    };

    el.createButton.addEventListener("click", () => void this.createSession());
    el.deleteButton.addEventListener("click", () => void this.endSession());
    el.stepButton.addEventListener("click", () => void this.step());
    el.removeButton.addEventListener("click", () => {
      if (this.state.selectedBox !== null) {
        this.state.removeBox(this.state.selectedBox);
        this.refresh();
      }
    });
    const applyEgo = () => {
      this.state.setEgo(Number(el.egoDx.value), Number(el.egoDy.value));
      this.refresh();
    };
    el.egoDx.addEventListener("input", applyEgo);
    el.egoDy.addEventListener("input", applyEgo);
    this.refresh();
  }

  refresh(): void {
    const issues = this.state.validationIssues();
    this.el.issuesList.replaceChildren(
      ...issues.map((text) => {
        const li = document.createElement("li");
        li.textContent = text;
        return li;
      }),
    );
    this.el.stepButton.disabled = !this.state.canStep();
    this.el.statusLine.textContent =
      this.state.status === "session-gone"
        ? "session gone - create a new one"
        : this.state.lastError ?? this.state.status;
    this.layoutCanvas.draw();
  }

  async createSession(): Promise<void> {
    const mode = this.el.modeSelect.value === "simulator" ? "simulator" : "generator";
    const body: Parameters<SteerClient["createSession"]>[0] = { mode };
    if (mode === "simulator") {
      const ref = this.el.referenceInput.value;
      if (ref.length === 0) {
        this.state.lastError = "simulator mode needs a reference image";
        this.refresh();
        return;
      }
      body.reference_image = ref;
    }
    try {
      this.state.sessionId = await this.client.createSession(body);
      this.state.history = [];
      this.state.status = "idle";
      this.state.lastError = null;
    } catch (err) {
      this.state.lastError = err instanceof Error ? err.message : String(err);
      this.state.status = "error";
    }
    this.refresh();
  }

  async endSession(): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      await this.client.deleteSession(this.state.sessionId);
    } catch {
      // Session may already be gone; either way the client forgets it.
    }
    this.state.sessionId = null;
    this.state.status = "idle";
    this.refresh();
  }

  async step(): Promise<void> {
    if (!this.state.canStep() || this.state.sessionId === null) return;
    this.state.status = "stepping";
    this.refresh();
    try {
      const res = await this.client.step(this.state.sessionId, this.state.layoutJson());
      this.state.pushFrame({
        frameIndex: res.frame_index,
        framePng: res.frame_png,
        priorOrigin: res.prior_origin,
      });
      this.el.frameView.src = `data:image/png;base64,${res.frame_png}`;
      this.timeline.render(this.state.history);
      this.state.status = "idle";
      this.state.lastError = null;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.status = "session-gone";
        this.state.sessionId = null;
      } else {
        this.state.status = "error";
        this.state.lastError = err instanceof Error ? err.message : String(err);
      }
    }
    this.refresh();
  }
}

/** Entry point for the browser page; tests construct SteerApp directly. */
export function mount(root: Document, baseUrl: string): SteerApp {
  const byId = <T extends HTMLElement>(id: string): T => {
    const node = root.getElementById(id);
    if (node === null) throw new Error(`missing element #${id}`);
    return node as T;
  };
  const el: AppElements = {
    canvas: byId<HTMLCanvasElement>("layout-canvas"),
    stepButton: byId<HTMLButtonElement>("step-button"),
    createButton: byId<HTMLButtonElement>("create-button"),
    deleteButton: byId<HTMLButtonElement>("delete-button"),
    modeSelect: byId<HTMLSelectElement>("mode-select"),
    referenceInput: byId<HTMLInputElement>("reference-b64"),
    egoDx: byId<HTMLInputElement>("ego-dx"),
    egoDy: byId<HTMLInputElement>("ego-dy"),
    removeButton: byId<HTMLButtonElement>("remove-button"),
    statusLine: byId("status-line"),
    issuesList: byId("issues-list"),
    frameView: byId<HTMLImageElement>("frame-view"),
    timelineRoot: byId("timeline"),
  };
  return new SteerApp(new SteerClient(baseUrl), el, parseLayout({}));
}
