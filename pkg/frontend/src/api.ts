/**
 * Thin client for the scoring service HTTP API.
 *
 * The fetch implementation is injectable so tests (and extension
 * background contexts) can substitute their own transport.
 */

import type { Mode, ScoreWire } from "./scoremath.js";

export interface BreakdownWire {
  entity: string;
  constraints: string[];
  actions: string[];
  default: string[];
  fallback: string[];
}

export interface SessionReply {
  session_id: string;
  breakdown: BreakdownWire;
}

export interface PageStatusReply {
  page_id: string;
  status: "queued" | "processing" | "done" | "error";
  error: { code: string; message: string } | null;
  stats: Record<string, unknown> | null;
}

export interface RenderReply {
  page_id: string;
  mode: Mode;
  threshold: number;
  html: string;
  scores: ScoreWire;
}

export interface CompleteReply {
  session_id: string;
  status: string;
  pages: number;
  mean_latency_ms: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly retryable: boolean = false,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(0, "unreachable", String(err), true);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `service returned ${response.status}`;
      let retryable = response.status >= 500;
      try {
        const payload = (await response.json()) as {
          code?: string; message?: string; retryable?: boolean;
        };
        if (payload.code) code = payload.code;
        if (payload.message) message = payload.message;
        if (payload.retryable !== undefined) retryable = payload.retryable;
      } catch {
        // non-JSON error body; keep the defaults
      }
      throw new ServiceError(response.status, code, message, retryable);
    }
    return (await response.json()) as T;
  }

  createSession(task: string): Promise<SessionReply> {
    return this.request("POST", "/v1/sessions", { task });
  }

  submitPage(sessionId: string, url: string, html: string): Promise<{ page_id: string }> {
    return this.request("POST", `/v1/sessions/${sessionId}/pages`, { url, html });
  }

  getPage(pageId: string): Promise<PageStatusReply> {
    return this.request("GET", `/v1/pages/${pageId}`);
  }

  getRender(pageId: string, mode: Mode, threshold: number): Promise<RenderReply> {
    const query = `mode=${encodeURIComponent(mode)}&threshold=${threshold}`;
    return this.request("GET", `/v1/pages/${pageId}/render?${query}`);
  }

  updateTask(sessionId: string, task: string): Promise<SessionReply> {
    return this.request("POST", `/v1/sessions/${sessionId}/task`, { task });
  }

  complete(sessionId: string): Promise<CompleteReply> {
    return this.request("POST", `/v1/sessions/${sessionId}/complete`);
  }
}
