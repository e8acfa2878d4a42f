/**
 * Wire types mirroring the review service's JSON API.
 *
 * Field names are bit-exact with the server; the client never invents state
 * beyond what these carry.
 */

export type ReviewKind = "segmentation" | "pair" | "triplet" | "refinement";
export type ReviewState = "pending" | "approved" | "rejected" | "annotated";
export type DecisionAction = "approve" | "reject" | "annotate" | "add" | "delete" | "keep";

export interface ReviewItem {
  id: string;
  kind: ReviewKind;
  work_id: string;
  payload: Record<string, unknown>;
  state: ReviewState;
  created_at: string;
  decided_at: string | null;
}

export interface QueueResponse {
  items: ReviewItem[];
  next_cursor: string | null;
  total: number;
}

export interface QueueFilters {
  state?: ReviewState | "";
  kind?: ReviewKind | "";
  work?: string;
}

export interface ItemDetail extends ReviewItem {
  context: {
    abstract: string | null;
    segments: Record<string, string> | null;
    hierarchy_fragment: [string, string][];
    legal_actions: DecisionAction[];
  };
}

export interface DecisionBody {
  action: DecisionAction;
  note?: string;
  concept_edit?: Record<string, unknown>;
}

export interface DecisionResponse {
  item: ReviewItem;
  work_unblocked: boolean;
}

export interface StatsResponse {
  queue_depth: number;
  items_by_state: Record<string, number>;
  pending_by_kind: Record<string, number>;
  works_by_status: Record<string, number>;
  counters: Record<string, number>;
  journal_length: number;
}

export interface WorkDetail {
  id: string;
  title: string;
  abstract_text: string;
  status: string | null;
  segments: Record<string, string> | null;
  pairs: unknown[];
  triplets: [string, string][];
  paths: { nodes: string[]; key: string }[];
}
