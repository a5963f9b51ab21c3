/**
 * Test doubles: an in-memory service behind the fetch interface, plus a
 * manually stepped sleeper for deterministic poll interleaving.
 *
 * The fake service parses submitted snapshots with the same pre-order
 * walk the panel uses, so its score maps are keyed by the ids the panel
 * will stamp — the same alignment contract the real engine follows.
 */

import type { FetchLike } from "../src/api.js";
import { collectElements } from "../src/ids.js";
import type { ScoreWire } from "../src/scoremath.js";

export const PAGE_HTML = `<!DOCTYPE html>
<html>
<head><title>FreshMart yogurt</title></head>
<body>
  <header><h1>Greek Yogurt</h1></header>
  <main>
    <div class="card">
      <h2>Vanilla Greek Yogurt 4 pack</h2>
      <p class="price">price $4.58</p>
      <button>Add to cart</button>
    </div>
    <div class="card">
      <h2>Strawberry Smoothie</h2>
      <p class="price">price $3.99</p>
      <button>Add to cart</button>
    </div>
  </main>
  <footer><a href="/contact">Contact us</a></footer>
</body>
</html>`;

export function makePageDocument(html: string = PAGE_HTML): Document {
  return new DOMParser().parseFromString(html, "text/html");
}

export type ScoreRule = (text: string, tag: string, url: string, task: string) => number;

/** Tokens of the task (>= 4 chars) hit 90; "price" hits 50; rest 10. */
export const defaultRule: ScoreRule = (text, _tag, _url, task) => {
  const lower = text.toLowerCase();
  const tokens = task.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length >= 4);
  if (tokens.some((t) => lower.includes(t))) return 90;
  if (lower.includes("price")) return 50;
  return 10;
};

interface FakePage {
  scores: ScoreWire;
  pollsBeforeDone: number;
}

export class FakeService {
  counters = {
    createSession: 0,
    submitPage: 0,
    getPage: 0,
    getRender: 0,
    updateTask: 0,
    complete: 0,
  };
  rule: ScoreRule = defaultRule;
  pollsBeforeDone = 0;
  failNext: { status: number; code: string } | null = null;
  private pages = new Map<string, FakePage>();
  private sessions = new Map<string, { task: string; completed: boolean }>();
  private nextId = 1;

  /** Scoring requests are session creation, page submission, task update. */
  get scoringCalls(): number {
    return this.counters.createSession + this.counters.submitPage
      + this.counters.updateTask;
  }

  private scorePage(html: string, url: string, task: string): ScoreWire {
    const doc = new DOMParser().parseFromString(html, "text/html");
    const scores: ScoreWire = {};
    collectElements(doc.documentElement).forEach((el, id) => {
      const direct = Array.from(el.childNodes)
        .filter((n) => n.nodeType === 3)
        .map((n) => n.textContent ?? "")
        .join(" ")
        .trim();
      scores[String(id)] = {
        score: this.rule(direct, el.tagName.toLowerCase(), url, task),
        channel: "text",
      };
    });
    return scores;
  }

  private reply(status: number, body: unknown) {
    return { ok: status < 400, status, json: async () => body };
  }

  fetch: FetchLike = async (url, init) => {
    if (this.failNext) {
      const { status, code } = this.failNext;
      this.failNext = null;
      return this.reply(status, { code, message: "injected failure", retryable: true });
    }
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    const path = url.replace(/^https?:\/\/[^/]+/, "");

    let match = path.match(/^\/v1\/sessions$/);
    if (match && method === "POST") {
      this.counters.createSession += 1;
      if (!String(body.task ?? "").trim()) {
        return this.reply(400, { code: "empty_task", message: "empty", retryable: false });
      }
      const id = `s${this.nextId++}`;
      this.sessions.set(id, { task: body.task, completed: false });
      return this.reply(201, {
        session_id: id,
        breakdown: { entity: body.task, constraints: [], actions: [], default: [], fallback: [] },
      });
    }

    match = path.match(/^\/v1\/sessions\/([^/]+)\/pages$/);
    if (match && method === "POST") {
      this.counters.submitPage += 1;
      const session = this.sessions.get(match[1]);
      if (!session) return this.reply(404, { code: "unknown_session", message: "?", retryable: false });
      if (session.completed) {
        return this.reply(409, { code: "session_completed", message: "done", retryable: false });
      }
      const pageId = `p${this.nextId++}`;
      this.pages.set(pageId, {
        scores: this.scorePage(body.html, body.url, session.task),
        pollsBeforeDone: this.pollsBeforeDone,
      });
      return this.reply(202, { page_id: pageId });
    }

    match = path.match(/^\/v1\/pages\/([^/]+)$/);
    if (match && method === "GET") {
      this.counters.getPage += 1;
      const page = this.pages.get(match[1]);
      if (!page) return this.reply(404, { code: "unknown_page", message: "?", retryable: false });
      if (page.pollsBeforeDone > 0) {
        page.pollsBeforeDone -= 1;
        return this.reply(200, { page_id: match[1], status: "processing", error: null, stats: null });
      }
      return this.reply(200, { page_id: match[1], status: "done", error: null, stats: {} });
    }

    match = path.match(/^\/v1\/pages\/([^/]+)\/render\?mode=([a-z]+)&threshold=(\d+)$/);
    if (match && method === "GET") {
      this.counters.getRender += 1;
      const page = this.pages.get(match[1]);
      if (!page) return this.reply(404, { code: "unknown_page", message: "?", retryable: false });
      return this.reply(200, {
        page_id: match[1],
        mode: match[2],
        threshold: Number(match[3]),
        html: "",
        scores: page.scores,
      });
    }

    match = path.match(/^\/v1\/sessions\/([^/]+)\/task$/);
    if (match && method === "POST") {
      this.counters.updateTask += 1;
      const session = this.sessions.get(match[1]);
      if (!session) return this.reply(404, { code: "unknown_session", message: "?", retryable: false });
      session.task = body.task;
      return this.reply(200, {
        session_id: match[1],
        breakdown: { entity: body.task, constraints: [], actions: [], default: [], fallback: [] },
      });
    }

    match = path.match(/^\/v1\/sessions\/([^/]+)\/complete$/);
    if (match && method === "POST") {
      this.counters.complete += 1;
      const session = this.sessions.get(match[1]);
      if (!session) return this.reply(404, { code: "unknown_session", message: "?", retryable: false });
      session.completed = true;
      return this.reply(200, {
        session_id: match[1], status: "completed", pages: this.pages.size, mean_latency_ms: 0,
      });
    }

    return this.reply(404, { code: "no_route", message: path, retryable: false });
  };
}

/** Sleeper whose pending waits are released one by one from the test. */
export class ManualSleeper {
  private pending: Array<() => void> = [];

  sleep = (_ms: number): Promise<void> =>
    new Promise((resolve) => this.pending.push(resolve));

  get waiting(): number {
    return this.pending.length;
  }

  release(): void {
    this.pending.shift()?.();
  }
}

/** Let queued microtasks run. */
export async function flush(times = 10): Promise<void> {
  for (let i = 0; i < times; i++) await Promise.resolve();
}
