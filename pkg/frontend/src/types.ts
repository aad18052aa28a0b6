/** Shapes exchanged with the review API. Mirrors the server contract exactly;
 * the client never invents fields the server does not return. */

export type ReviewStatus = "Pending" | "Approved" | "Rejected";

export interface QueueSummary {
  sample_id: string;
  status: ReviewStatus;
  corpus: string | null;
  task_category: string | null;
  mode: string | null;
}

export interface QueuePage {
  total: number;
  items: QueueSummary[];
  limit: number;
  offset: number;
}

export interface QueueFilters {
  status?: ReviewStatus;
  corpus?: string;
  category?: string;
}

/** Full item detail: the original queue row plus the server-derived status.
 * The record/verification payloads are passed through untyped since the UI
 * only displays them. */
export interface SampleDetail {
  sample_id: string;
  status: ReviewStatus;
  corpus?: string;
  task_category?: string;
  query?: string;
  record?: {
    mode?: string;
    segments?: [string, string][];
  };
  render?: { kind?: string; image?: string };
  verification?: Record<string, unknown>;
  [key: string]: unknown;
}

export interface DecisionBody {
  decision: "Approved" | "Rejected";
  reviewer: string;
  revision: number;
  reason: string;
}

export interface DecisionResult {
  sample_id: string;
  status: ReviewStatus;
  revision: number;
}

export interface ReviewStats {
  total: number;
  by_status: Record<string, number>;
  by_corpus: Record<string, Record<string, number>>;
  decisions: number;
}
