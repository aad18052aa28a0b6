/** In-process stand-in for the review API with the same semantics:
 * append-only decision log, latest-revision-wins, idempotent replays,
 * 409 on a reused revision with a different decision.
 */

import type { FetchFn } from "../src/api.js";
import type { ReviewStatus } from "../src/types.js";

interface LogEntry {
  sample_id: string;
  decision: string;
  reviewer: string;
  revision: number;
  reason: string;
}

export interface QueueRow {
  sample_id: string;
  corpus: string;
  task_category: string;
  record?: { mode?: string; segments?: [string, string][] };
  query?: string;
  [key: string]: unknown;
}

export function makeRows(n: number): QueueRow[] {
  return Array.from({ length: n }, (_, k) => ({
    sample_id: `q${String(k).padStart(3, "0")}`,
    corpus: k % 2 === 0 ? "SPAR" : "VSI",
    task_category: "route_plan",
    query: `Question ${k}`,
    record: { mode: k % 3 === 0 ? "Interleaved" : "Textual" },
  }));
}

export class MockReviewServer {
  readonly log: LogEntry[] = [];
  postCount = 0;
  private readonly order: string[];
  private readonly items = new Map<string, QueueRow>();

  constructor(
    rows: QueueRow[],
    private readonly token: string | null = null,
    /** existing log entries, to simulate server restarts / other reviewers */
    seedLog: LogEntry[] = [],
  ) {
    this.order = rows.map((r) => r.sample_id);
    for (const r of rows) this.items.set(r.sample_id, r);
    this.log.push(...seedLog);
  }

  statusOf(sid: string): ReviewStatus {
    let best: LogEntry | null = null;
    for (const e of this.log) {
      if (e.sample_id !== sid) continue;
      if (!best || e.revision >= best.revision) best = e;
    }
    return (best?.decision as ReviewStatus) ?? "Pending";
  }

  /** Drop-in replacement for fetch, bound to this server. */
  fetch: FetchFn = async (url, init) => {
    const u = new URL(url, "http://mock");
    const auth = getHeader(init, "Authorization");
    if (this.token && auth !== `Bearer ${this.token}`) {
      return json(401, { detail: "invalid token" });
    }
    if (u.pathname === "/api/queue") return this.queue(u.searchParams);
    if (u.pathname === "/api/stats") return this.stats();
    const m = u.pathname.match(/^\/api\/samples\/([^/]+)(\/decision)?$/);
    if (m && !m[2]) return this.sample(m[1]);
    if (m && m[2] && init?.method === "POST") {
      return this.decide(m[1], JSON.parse(String(init.body)) as LogEntry);
    }
    return json(404, { detail: "no such route" });
  };

  private queue(params: URLSearchParams): Response {
    const status = params.get("status");
    const corpus = params.get("corpus");
    const limit = Number(params.get("limit") ?? 50);
    const offset = Number(params.get("offset") ?? 0);
    const rows = this.order
      .map((sid) => {
        const item = this.items.get(sid)!;
        return {
          sample_id: sid,
          status: this.statusOf(sid),
          corpus: item.corpus,
          task_category: item.task_category,
          mode: item.record?.mode ?? null,
        };
      })
      .filter((r) => !status || r.status === status)
      .filter((r) => !corpus || r.corpus === corpus);
    return json(200, {
      total: rows.length,
      items: rows.slice(offset, offset + limit),
      limit,
      offset,
    });
  }

  private sample(sid: string): Response {
    const item = this.items.get(sid);
    if (!item) return json(404, { detail: "unknown sample" });
    return json(200, { ...item, status: this.statusOf(sid) });
  }

  private decide(sid: string, body: LogEntry): Response {
    this.postCount += 1;
    if (!this.items.has(sid)) return json(404, { detail: "unknown sample" });
    if (body.decision !== "Approved" && body.decision !== "Rejected") {
      return json(422, { detail: "decision must be Approved or Rejected" });
    }
    const entry: LogEntry = { ...body, sample_id: sid };
    const existing = this.log.find(
      (e) => e.sample_id === sid && e.revision === body.revision,
    );
    if (existing) {
      if (!sameEntry(existing, entry)) {
        return json(409, {
          detail: "revision already used with a different decision",
        });
      }
      // idempotent replay: no new log entry
    } else {
      this.log.push(entry);
    }
    return json(200, {
      sample_id: sid,
      status: this.statusOf(sid),
      revision: body.revision,
    });
  }

  private stats(): Response {
    const by_status: Record<string, number> = {
      Pending: 0,
      Approved: 0,
      Rejected: 0,
    };
    for (const sid of this.order) by_status[this.statusOf(sid)] += 1;
    return json(200, {
      total: this.order.length,
      by_status,
      by_corpus: {},
      decisions: this.log.length,
    });
  }
}

function sameEntry(a: LogEntry, b: LogEntry): boolean {
  return (
    a.decision === b.decision &&
    a.reviewer === b.reviewer &&
    a.reason === b.reason
  );
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function getHeader(init: RequestInit | undefined, name: string): string | null {
  const headers = init?.headers;
  if (!headers) return null;
  if (headers instanceof Headers) return headers.get(name);
  if (Array.isArray(headers)) {
    const hit = headers.find(([k]) => k.toLowerCase() === name.toLowerCase());
    return hit ? hit[1] : null;
  }
  const record = headers as Record<string, string>;
  const key = Object.keys(record).find(
    (k) => k.toLowerCase() === name.toLowerCase(),
  );
  return key ? record[key] : null;
}
