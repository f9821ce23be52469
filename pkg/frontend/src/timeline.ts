/**
 * Frame timeline: thumbnails of every frame the session has produced, in
 * order. Images are fed the exact base64 payload from the API, so displayed
 * bytes equal response bytes with no client-side re-encoding.
 */

import { FrameRecord } from "./editor.js";

export class Timeline {
  onSelect: (record: FrameRecord) => void = () => {};

  constructor(private readonly root: HTMLElement) {}

  render(history: FrameRecord[]): void {
    this.root.replaceChildren();
    for (const record of history) {
      const cell = document.createElement("button");
      cell.className = "timeline-cell";
      cell.title = `frame ${record.frameIndex} (${record.priorOrigin})`;
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${record.framePng}`;
      img.width = 48;
      img.height = 48;
      img.dataset.frameIndex = String(record.frameIndex);
      cell.appendChild(img);
      const label = document.createElement("span");
      label.textContent = String(record.frameIndex);
      cell.appendChild(label);
      cell.addEventListener("click", () => this.onSelect(record));
      this.root.appendChild(cell);
    }
  }
}
