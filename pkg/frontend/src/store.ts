/** Client-side review state with optimistic decisions.
 *
 * Invariants:
 *  - the store never keeps decision state the server has not confirmed: a
 *    failed POST rolls the item back, a conflict triggers a refetch;
 *  - duplicated submits of the same decision coalesce into a single POST
 *    (and reuse the revision, so the server records exactly one decision);
 *  - a fresh store + load() always reproduces the server's queue.
 */

import { ApiClient, ConflictError } from "./api.js";
import type {
  DecisionResult,
  QueueFilters,
  QueueSummary,
  ReviewStats,
  ReviewStatus,
} from "./types.js";

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

export interface StoreState {
  items: QueueSummary[];
  total: number;
  limit: number;
  offset: number;
  filters: QueueFilters;
  stats: ReviewStats | null;
  selected: number;
  lastError: string | null;
}

type Listener = (state: StoreState) => void;

export class ReviewStore {
  private state: StoreState = {
    items: [],
    total: 0,
    limit: 25,
    offset: 0,
    filters: { status: "Pending" },
    stats: null,
    selected: 0,
    lastError: null,
  };
  private listeners: Listener[] = [];
  /** confirmed (decision, revision) per sample, for idempotent resubmits */
  private confirmed = new Map<string, { decision: string; revision: number }>();
  private inFlight = new Map<
    string,
    { decision: string; promise: Promise<DecisionResult> }
  >();

  constructor(
    private readonly api: ApiClient,
    public reviewer = "reviewer",
  ) {}

  getState(): StoreState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(patch: Partial<StoreState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  async load(): Promise<void> {
    const { filters, limit, offset } = this.state;
    const [page, stats] = await Promise.all([
      this.api.queue(filters, limit, offset),
      this.api.stats(),
    ]);
    const selected = Math.min(
      this.state.selected,
      Math.max(page.items.length - 1, 0),
    );
    this.emit({
      items: page.items,
      total: page.total,
      stats,
      selected,
      lastError: null,
    });
  }

  async setFilters(filters: QueueFilters): Promise<void> {
    this.emit({ filters, offset: 0, selected: 0 });
    await this.load();
  }

  async setPage(offset: number): Promise<void> {
    this.emit({ offset: Math.max(0, offset), selected: 0 });
    await this.load();
  }

  select(delta: number): void {
    const n = this.state.items.length;
    if (n === 0) return;
    const selected = Math.min(Math.max(this.state.selected + delta, 0), n - 1);
    this.emit({ selected });
  }

  selectedItem(): QueueSummary | null {
    return this.state.items[this.state.selected] ?? null;
  }

  /** Submit a decision optimistically. Resolves with the server result. */
  decide(
    sampleId: string,
    decision: "Approved" | "Rejected",
    reason = "",
  ): Promise<DecisionResult> {
    if (decision === "Rejected" && reason.trim() === "") {
      throw new ValidationError("rejecting requires a reason");
    }
    const prior = this.confirmed.get(sampleId);
    if (prior && prior.decision === decision) {
      // resubmitting the confirmed decision: reuse the revision so the
      // server treats it as a no-op replay
      return this.post(sampleId, decision, reason, prior.revision);
    }
    const pending = this.inFlight.get(sampleId);
    if (pending && pending.decision === decision) return pending.promise;
    const revision = (prior?.revision ?? 0) + 1;
    const promise = this.post(sampleId, decision, reason, revision);
    this.inFlight.set(sampleId, { decision, promise });
    void promise
      .catch(() => undefined) // callers observe the rejection via `promise`
      .finally(() => {
        if (this.inFlight.get(sampleId)?.promise === promise) {
          this.inFlight.delete(sampleId);
        }
      });
    return promise;
  }

  private async post(
    sampleId: string,
    decision: "Approved" | "Rejected",
    reason: string,
    revision: number,
  ): Promise<DecisionResult> {
    const snapshot = this.state.items;
    this.applyLocal(sampleId, decision);
    try {
      const result = await this.api.decide(sampleId, {
        decision,
        reviewer: this.reviewer,
        revision,
        reason,
      });
      this.confirmed.set(sampleId, { decision: result.status, revision });
      return result;
    } catch (err) {
      if (err instanceof ConflictError) {
        // someone else used this revision: resync from the server
        this.emit({ lastError: err.detail });
        await this.load();
      } else {
        this.emit({
          items: snapshot,
          lastError: err instanceof Error ? err.message : String(err),
        });
      }
      throw err;
    }
  }

  private applyLocal(sampleId: string, status: ReviewStatus): void {
    const filterStatus = this.state.filters.status;
    let items: QueueSummary[];
    let total = this.state.total;
    if (filterStatus && filterStatus !== status) {
      // item no longer matches the active filter: drop it from the page
      items = this.state.items.filter((i) => i.sample_id !== sampleId);
      if (items.length !== this.state.items.length) total -= 1;
    } else {
      items = this.state.items.map((i) =>
        i.sample_id === sampleId ? { ...i, status } : i,
      );
    }
    const selected = Math.min(
      this.state.selected,
      Math.max(items.length - 1, 0),
    );
    this.emit({ items, total, selected, lastError: null });
  }
}
