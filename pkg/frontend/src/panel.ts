/**
 * Control-panel state machine: task entry, mode/threshold adjustment,
 * task update, completion, and persistence across navigation.
 *
 * The panel snapshots the page, submits it to the service, polls job
 * status, then applies the returned scores to the live DOM. Mode and
 * threshold changes re-render from the service's cached scores and never
 * trigger re-scoring. One page job is in flight at a time; polls from a
 * superseded job are discarded.
 */

import { ServiceClient, ServiceError } from "./api.js";
import { Annotator } from "./annotate.js";
import { DEFAULT_SETTINGS, Mode, RenderSettings, ScoreWire } from "./scoremath.js";

export type PanelStatus = "idle" | "processing" | "done" | "error";

export interface PanelState {
  task: string;
  mode: Mode;
  threshold: number;
  status: PanelStatus;
  statusLine: string;
  sessionId: string | null;
  pageId: string | null;
  busy: boolean;
  validationError: string | null;
}

export interface PanelOptions {
  pageUrl?: () => string;
  pollIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onChange?: (state: PanelState) => void;
}

const defaultSleep = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

export class Panel {
  readonly state: PanelState = {
    task: "",
    mode: DEFAULT_SETTINGS.mode,
    threshold: DEFAULT_SETTINGS.threshold,
    status: "idle",
    statusLine: "",
    sessionId: null,
    pageId: null,
    busy: false,
    validationError: null,
  };

  private readonly annotator = new Annotator();
  private epoch = 0;
  private lastScores: ScoreWire | null = null;
  private changeListeners: Array<(state: PanelState) => void> = [];

  constructor(
    private readonly client: ServiceClient,
    private readonly pageDocument: Document,
    private readonly options: PanelOptions = {},
  ) {}

  /** Threshold control is meaningful only in filter mode. */
  get thresholdVisible(): boolean {
    return this.state.mode === "filter";
  }

  onChange(listener: (state: PanelState) => void): void {
    this.changeListeners.push(listener);
  }

  private notify(): void {
    const snapshot = { ...this.state };
    this.options.onChange?.(snapshot);
    for (const listener of this.changeListeners) listener(snapshot);
  }

  private setStatus(status: PanelStatus, line?: string): void {
    this.state.status = status;
    this.state.statusLine =
      line ?? { idle: "", processing: "Processing…", done: "Done", error: "Error" }[status];
    this.state.busy = status === "processing";
    this.notify();
  }

  private settings(): RenderSettings {
    return { ...DEFAULT_SETTINGS, mode: this.state.mode, threshold: this.state.threshold };
  }

  private pageRoot(): Element {
    return this.pageDocument.documentElement;
  }

  /** Start a session for the task and process the current page. */
  async submitTask(task: string): Promise<void> {
    if (!task.trim()) {
      this.state.validationError = "Task must not be empty";
      this.notify();
      return;
    }
    this.state.validationError = null;
    if (this.state.sessionId) {
      await this.updateTask(task);
      return;
    }
    this.state.task = task;
    this.setStatus("processing");
    try {
      const session = await this.client.createSession(task);
      this.state.sessionId = session.session_id;
    } catch (err) {
      this.setStatus("error", errorLine(err));
      return;
    }
    await this.processCurrentPage();
  }

  /**
   * Snapshot, submit, poll, render, annotate. The snapshot is taken with
   * annotations removed so the service always sees the original page.
   */
  private async processCurrentPage(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    const myEpoch = ++this.epoch;
    if (this.annotator.isApplied) this.annotator.remove();
    const html = "<!DOCTYPE html>" + this.pageRoot().outerHTML;
    const url = this.options.pageUrl?.() ?? "about:page";
    this.setStatus("processing");
    try {
      const { page_id } = await this.client.submitPage(sessionId, url, html);
      const interval = this.options.pollIntervalMs ?? 150;
      const sleep = this.options.sleep ?? defaultSleep;
      for (;;) {
        if (this.epoch !== myEpoch) return; // superseded; drop this job
        const job = await this.client.getPage(page_id);
        if (this.epoch !== myEpoch) return; // stale poll reply
        if (job.status === "done") break;
        if (job.status === "error") {
          this.setStatus("error", job.error?.message ?? "processing failed");
          return;
        }
        await sleep(interval);
      }
      const render = await this.client.getRender(
        page_id, this.state.mode, this.state.threshold);
      if (this.epoch !== myEpoch) return;
      this.state.pageId = page_id;
      this.lastScores = render.scores;
      this.annotator.apply(this.pageRoot(), render.scores, this.settings());
      this.setStatus("done");
    } catch (err) {
      if (this.epoch !== myEpoch) return;
      this.setStatus("error", errorLine(err));
    }
  }

  /**
   * Re-render with a new mode or threshold from cached scores. The swap
   * is atomic: previous annotations are fully removed before the new set
   * is applied. No scoring request is issued.
   */
  async adjust(change: { mode?: Mode; threshold?: number }): Promise<void> {
    if (change.mode !== undefined) this.state.mode = change.mode;
    if (change.threshold !== undefined) this.state.threshold = change.threshold;
    this.notify();
    if (!this.state.pageId || this.state.status !== "done") return;
    try {
      const render = await this.client.getRender(
        this.state.pageId, this.state.mode, this.state.threshold);
      this.lastScores = render.scores;
      this.annotator.apply(this.pageRoot(), render.scores, this.settings());
      this.notify();
    } catch (err) {
      this.setStatus("error", errorLine(err));
    }
  }

  /** Send the revised task, then fully re-process the current page. */
  async updateTask(task: string): Promise<void> {
    if (!task.trim()) {
      this.state.validationError = "Task must not be empty";
      this.notify();
      return;
    }
    if (!this.state.sessionId) {
      await this.submitTask(task);
      return;
    }
    this.state.validationError = null;
    this.state.task = task;
    this.setStatus("processing");
    try {
      await this.client.updateTask(this.state.sessionId, task);
    } catch (err) {
      this.setStatus("error", errorLine(err));
      return;
    }
    this.state.pageId = null;
    this.lastScores = null;
    await this.processCurrentPage();
  }

  /** Finish the session: restore the page and deactivate the panel. */
  async complete(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    try {
      await this.client.complete(sessionId);
    } catch (err) {
      this.setStatus("error", errorLine(err));
      return;
    }
    this.epoch++; // cancel any in-flight job
    if (this.annotator.isApplied) this.annotator.remove();
    this.state.sessionId = null;
    this.state.pageId = null;
    this.lastScores = null;
    this.setStatus("idle");
  }

  /**
   * Page navigation within an active session: auto-submit the new page
   * under the same task. Supersedes any in-flight job.
   */
  async handleNavigation(): Promise<void> {
    if (!this.state.sessionId) return;
    this.state.pageId = null;
    await this.processCurrentPage();
  }

  /** Scores from the most recent render, for inspection/debugging. */
  get scores(): ScoreWire | null {
    return this.lastScores;
  }
}

function errorLine(err: unknown): string {
  if (err instanceof ServiceError) return `${err.code}: ${err.message}`;
  return String(err);
}
