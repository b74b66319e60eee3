/** Operator panel: registration workflow, annotations, anatomy and slice
 * controls, live metrics. Pure DOM; all actions go through callbacks.
 */

import type { ViewerState } from "./state.js";
import type { Rgba, Vec3 } from "./types.js";

export const FIDUCIAL_LABELS = ["A", "B", "C", "D", "E", "F"];
export const FRE_WARN_MM = 3.0;

export const ANNOTATION_PALETTE: Rgba[] = [
  [230, 60, 60, 255],
  [60, 160, 230, 255],
  [250, 200, 40, 255],
  [60, 210, 120, 255],
  [200, 90, 220, 255],
  [245, 130, 50, 255],
  [90, 220, 220, 255],
  [240, 240, 240, 255],
];

export interface UiCallbacks {
  captureFiducial(label: string): void;
  register(): void;
  annotateAtTip(color: Rgba): void;
  setPlaceByClick(enabled: boolean): void;
  removeAnnotation(id: string): void;
  toggleAnatomy(): void;
  setOpacity(opacity: number): void;
  setSlice(axis: number, index: number): void;
  exportSession(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class Panel {
  selectedColor: Rgba = ANNOTATION_PALETTE[0]!;
  placeByClick = false;

  private status = el("div", "status", "connecting…");
  private queueNote = el("div", "queue-note");
  private freLine = el("div", "fre", "not registered");
  private metricsBox = el("div", "metrics");
  private captureButtons = new Map<string, HTMLButtonElement>();
  private registerButton = el("button", "", "register (need 3+)");
  private workflowNote = el("div", "note");
  private annotationList = el("div", "annotation-list");
  private anatomyButton = el("button", "", "anatomy: full");
  private sliceAxis = el("select") as HTMLSelectElement;
  private sliceIndex = el("input") as HTMLInputElement;
  private sliceInset = el("img", "slice-inset") as HTMLImageElement;
  private sliceLabel = el("div", "note", "slice: none");
  private volumeDims: [number, number, number] | null = null;

  constructor(
    root: HTMLElement,
    private callbacks: UiCallbacks,
    private baseUrl: string,
  ) {
    root.appendChild(this.status);
    root.appendChild(this.queueNote);

    const reg = el("section");
    reg.appendChild(el("h3", "", "Registration"));
    const buttonRow = el("div", "button-row");
    for (const label of FIDUCIAL_LABELS) {
      const button = el("button", "capture", label);
      button.onclick = () => callbacks.captureFiducial(label);
      this.captureButtons.set(label, button);
      buttonRow.appendChild(button);
    }
    reg.appendChild(buttonRow);
    this.registerButton.onclick = () => callbacks.register();
    this.registerButton.disabled = true;
    reg.appendChild(this.registerButton);
    reg.appendChild(this.freLine);
    reg.appendChild(this.workflowNote);
    root.appendChild(reg);

    const anatomy = el("section");
    anatomy.appendChild(el("h3", "", "Anatomy"));
    this.anatomyButton.onclick = () => callbacks.toggleAnatomy();
    anatomy.appendChild(this.anatomyButton);
    const opacity = el("input") as HTMLInputElement;
    opacity.type = "range";
    opacity.min = "0.05";
    opacity.max = "1";
    opacity.step = "0.05";
    opacity.value = "0.35";
    opacity.oninput = () => callbacks.setOpacity(Number(opacity.value));
    anatomy.appendChild(opacity);
    root.appendChild(anatomy);

    const stones = el("section");
    stones.appendChild(el("h3", "", "Stones"));
    const palette = el("div", "palette");
    ANNOTATION_PALETTE.forEach((color, i) => {
      const swatch = el("button", "swatch");
      swatch.style.background = `rgb(${color[0]},${color[1]},${color[2]})`;
      if (i === 0) swatch.classList.add("selected");
      swatch.onclick = () => {
        this.selectedColor = color;
        palette
          .querySelectorAll(".swatch")
          .forEach((s, j) => s.classList.toggle("selected", j === i));
      };
      palette.appendChild(swatch);
    });
    stones.appendChild(palette);
    const markButton = el("button", "", "mark at scope tip");
    markButton.onclick = () => callbacks.annotateAtTip(this.selectedColor);
    stones.appendChild(markButton);
    const clickToggle = el("button", "", "place by click: off");
    clickToggle.onclick = () => {
      this.placeByClick = !this.placeByClick;
      clickToggle.textContent = `place by click: ${this.placeByClick ? "on" : "off"}`;
      callbacks.setPlaceByClick(this.placeByClick);
    };
    stones.appendChild(clickToggle);
    stones.appendChild(this.annotationList);
    root.appendChild(stones);

    const slice = el("section");
    slice.appendChild(el("h3", "", "CT slice"));
    for (const [value, label] of [["0", "axis 0"], ["1", "axis 1"], ["2", "axis 2"]]) {
      const option = el("option") as HTMLOptionElement;
      option.value = value!;
      option.textContent = label!;
      this.sliceAxis.appendChild(option);
    }
    this.sliceAxis.value = "2";
    this.sliceIndex.type = "range";
    this.sliceIndex.min = "0";
    this.sliceIndex.max = "0";
    this.sliceIndex.value = "0";
    const issue = () =>
      callbacks.setSlice(Number(this.sliceAxis.value), Number(this.sliceIndex.value));
    this.sliceAxis.onchange = () => {
      this.updateSliceRange();
      issue();
    };
    this.sliceIndex.oninput = issue;
    slice.appendChild(this.sliceAxis);
    slice.appendChild(this.sliceIndex);
    slice.appendChild(this.sliceLabel);
    slice.appendChild(this.sliceInset);
    root.appendChild(slice);

    const metrics = el("section");
    metrics.appendChild(el("h3", "", "Exploration metrics"));
    metrics.appendChild(this.metricsBox);
    root.appendChild(metrics);

    const exportButton = el("button", "", "export session");
    exportButton.onclick = () => callbacks.exportSession();
    root.appendChild(exportButton);
  }

  setVolumeDims(dims: [number, number, number] | null): void {
    this.volumeDims = dims;
    this.updateSliceRange();
  }

  private updateSliceRange(): void {
    if (!this.volumeDims) return;
    const axis = Number(this.sliceAxis.value);
    this.sliceIndex.max = String(this.volumeDims[axis]! - 1);
  }

  note(text: string): void {
    this.workflowNote.textContent = text;
  }

  setQueueDepth(count: number): void {
    this.queueNote.textContent = count > 0 ? `${count} command(s) queued offline` : "";
  }

  sync(state: ViewerState): void {
    this.status.textContent =
      `${state.connection}` +
      (state.sessionId ? ` · ${state.sessionId}` : "") +
      ` · samples ${state.sampleCount}`;

    for (const [label, button] of this.captureButtons) {
      const capture = state.captures[label];
      button.textContent = capture ? `${label} ✓(${capture.n_samples})` : label;
    }
    const captured = Object.keys(state.captures).length;
    this.registerButton.disabled = captured < 3;
    this.registerButton.textContent =
      captured < 3 ? `register (${captured}/3)` : "register";

    if (state.registered && state.freMm !== null) {
      this.freLine.textContent = `FRE ${state.freMm.toFixed(2)} mm`;
      this.freLine.classList.toggle("warn", state.freMm > FRE_WARN_MM);
    } else if (state.registered) {
      this.freLine.textContent = "registered (preloaded)";
      this.freLine.classList.remove("warn");
    } else {
      this.freLine.textContent = "not registered";
      this.freLine.classList.remove("warn");
    }

    this.anatomyButton.textContent = `anatomy: ${state.anatomyMode.replace("_", " ")}`;

    const m = state.metrics;
    const threshold = state.config ? state.config.threshold.toFixed(1) : "?";
    this.metricsBox.textContent = m
      ? `hull ${fmt(m.hull_volume_mm3, "mm³")} · ` +
        `distance ${fmt(m.path_length_mm, "mm")} · ` +
        `outliers ${m.outlier_fraction === null ? "-" : (m.outlier_fraction * 100).toFixed(2) + "%"}` +
        ` (threshold ${threshold})`
      : `no metrics yet (threshold ${threshold})`;

    this.annotationList.replaceChildren(
      ...state.annotations.map((annotation) => {
        const row = el("div", "annotation-row");
        const dot = el("span", "dot");
        dot.style.background = `rgb(${annotation.color[0]},${annotation.color[1]},${annotation.color[2]})`;
        row.appendChild(dot);
        row.appendChild(el("span", "", annotation.label));
        const remove = el("button", "remove", "×");
        remove.onclick = () => this.callbacks.removeAnnotation(annotation.id);
        row.appendChild(remove);
        return row;
      }),
    );

    if (state.slice) {
      const d = state.slice.descriptor;
      this.sliceLabel.textContent =
        d.kind === "axis" ? `slice: axis ${d.axis} @ ${d.index}` : "slice: oblique";
      this.sliceInset.src = `${this.baseUrl}/slices/${state.slice.imageId}.png`;
      this.sliceInset.style.display = "block";
    } else {
      this.sliceLabel.textContent = "slice: none";
      this.sliceInset.style.display = "none";
    }
  }
}

function fmt(value: number | null, unit: string): string {
  return value === null ? "-" : `${value.toFixed(1)} ${unit}`;
}

export function annotationPositionForClick(pick: Vec3 | null): Vec3 | null {
  return pick;
}
