/**
 * Panel UI construction and public exports.
 *
 * The panel lives in its own window/document (never inside the scored
 * page). Controls mirror the state machine: the threshold slider shows
 * only in filter mode, and everything is disabled while a page job runs.
 */

import { Panel, PanelState } from "./panel.js";

export { Annotator, snapshotAttributes } from "./annotate.js";
export { ServiceClient, ServiceError } from "./api.js";
export type { FetchLike, RenderReply, SessionReply } from "./api.js";
export { assignIds, collectElements, EXCLUDED_TAGS, ID_ATTR } from "./ids.js";
export {
  CONTAINER_TAGS, DEFAULT_SETTINGS, gradientHue, hslColor, opacityValue,
  propagateMax, retainedSet, scoreOf, treeFromElements,
} from "./scoremath.js";
export type { Mode, RenderSettings, ScoreWire, TreeNode } from "./scoremath.js";
export { Panel } from "./panel.js";
export type { PanelOptions, PanelState, PanelStatus } from "./panel.js";

export interface PanelElements {
  root: HTMLElement;
  taskInput: HTMLTextAreaElement;
  modeSelect: HTMLSelectElement;
  thresholdRow: HTMLElement;
  thresholdSlider: HTMLInputElement;
  statusLine: HTMLElement;
  submitButton: HTMLButtonElement;
  updateButton: HTMLButtonElement;
  completeButton: HTMLButtonElement;
}

const MODE_LABELS: Array<[string, string]> = [
  ["gradient", "Show all elements with color gradients"],
  ["opacity", "Fade less relevant content"],
  ["filter", "Only task-specific information visible"],
];

/** Build the control panel inside panelDocument and wire it to a Panel. */
export function createPanelElements(panelDocument: Document, panel: Panel): PanelElements {
  const doc = panelDocument;
  const root = doc.createElement("div");
  root.className = "tasklens-panel";

  const statusLine = doc.createElement("div");
  statusLine.className = "status";

  const modeSelect = doc.createElement("select");
  for (const [value, label] of MODE_LABELS) {
    const option = doc.createElement("option");
    option.value = value;
    option.textContent = label;
    modeSelect.appendChild(option);
  }
  modeSelect.value = panel.state.mode;

  const thresholdRow = doc.createElement("div");
  thresholdRow.className = "threshold-row";
  const thresholdSlider = doc.createElement("input");
  thresholdSlider.type = "range";
  thresholdSlider.min = "0";
  thresholdSlider.max = "100";
  thresholdSlider.value = String(panel.state.threshold);
  thresholdRow.appendChild(thresholdSlider);

  const taskInput = doc.createElement("textarea");
  taskInput.placeholder = "Describe your task";

  const submitButton = doc.createElement("button");
  submitButton.textContent = "Start";
  const updateButton = doc.createElement("button");
  updateButton.textContent = "Update task";
  const completeButton = doc.createElement("button");
  completeButton.textContent = "Task completed";

  root.append(statusLine, modeSelect, thresholdRow, taskInput,
    submitButton, updateButton, completeButton);

  const sync = (state: PanelState): void => {
    statusLine.textContent = state.statusLine;
    thresholdRow.style.display = state.mode === "filter" ? "" : "none";
    for (const button of [submitButton, updateButton, completeButton]) {
      button.disabled = state.busy;
    }
    modeSelect.disabled = state.busy;
    thresholdSlider.disabled = state.busy || state.pageId === null;
    if (state.validationError) statusLine.textContent = state.validationError;
  };
  sync(panel.state);

  submitButton.addEventListener("click", () => void panel.submitTask(taskInput.value));
  updateButton.addEventListener("click", () => void panel.updateTask(taskInput.value));
  completeButton.addEventListener("click", () => void panel.complete());
  modeSelect.addEventListener("change", () =>
    void panel.adjust({ mode: modeSelect.value as PanelState["mode"] }));
  thresholdSlider.addEventListener("change", () =>
    void panel.adjust({ threshold: Number(thresholdSlider.value) }));

  panel.onChange(sync);

  return {
    root, taskInput, modeSelect, thresholdRow, thresholdSlider, statusLine,
    submitButton, updateButton, completeButton,
  };
}
