/** Thin typed client over the review REST API.
 *
 * The fetch implementation is injectable so tests can run against an
 * in-process mock server, and the bearer token lives only in memory /
 * sessionStorage — never persisted.
 */

import type {
  DecisionBody,
  DecisionResult,
  QueueFilters,
  QueuePage,
  ReviewStats,
  SampleDetail,
} from "./types.js";

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** 409: the revision was already used with a different decision. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "ConflictError";
  }
}

export class AuthError extends ApiError {
  constructor(detail: string) {
    super(401, detail);
    this.name = "AuthError";
  }
}

async function raiseFor(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (res.status === 409) throw new ConflictError(detail);
  if (res.status === 401) throw new AuthError(detail);
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = (url, init) => fetch(url, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      headers: this.headers(),
    });
    await raiseFor(res);
    return (await res.json()) as T;
  }

  async queue(
    filters: QueueFilters = {},
    limit = 50,
    offset = 0,
  ): Promise<QueuePage> {
    const params = new URLSearchParams();
    if (filters.status) params.set("status", filters.status);
    if (filters.corpus) params.set("corpus", filters.corpus);
    if (filters.category) params.set("category", filters.category);
    params.set("limit", String(limit));
    params.set("offset", String(offset));
    return this.getJson<QueuePage>(`/api/queue?${params.toString()}`);
  }

  async sample(sampleId: string): Promise<SampleDetail> {
    return this.getJson<SampleDetail>(
      `/api/samples/${encodeURIComponent(sampleId)}`,
    );
  }

  async stats(): Promise<ReviewStats> {
    return this.getJson<ReviewStats>("/api/stats");
  }

  async decide(sampleId: string, body: DecisionBody): Promise<DecisionResult> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/samples/${encodeURIComponent(sampleId)}/decision`,
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify(body),
      },
    );
    await raiseFor(res);
    return (await res.json()) as DecisionResult;
  }
}
