/**
 * Typed fetch wrappers over the review service.
 *
 * Every non-2xx response becomes an ApiError carrying the HTTP status so
 * callers can branch on 404/409/422 without string matching.
 */

import type {
  DecisionBody,
  DecisionResponse,
  ItemDetail,
  QueueFilters,
  QueueResponse,
  ReviewItem,
  StatsResponse,
  WorkDetail,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(base + path, init);
  } catch (err) {
    throw new ApiError(0, `network error: ${String(err)}`);
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ReviewApi {
  constructor(private base: string = "") {}

  fetchQueue(filters: QueueFilters = {}, cursor?: string, limit?: number): Promise<QueueResponse> {
    const params = new URLSearchParams();
    if (filters.state) params.set("state", filters.state);
    if (filters.kind) params.set("kind", filters.kind);
    if (filters.work) params.set("work", filters.work);
    if (cursor) params.set("cursor", cursor);
    if (limit) params.set("limit", String(limit));
    const qs = params.toString();
    return request<QueueResponse>(this.base, `/api/queue${qs ? "?" + qs : ""}`);
  }

  fetchItem(id: string): Promise<ItemDetail> {
    return request<ItemDetail>(this.base, `/api/items/${encodeURIComponent(id)}`);
  }

  fetchWork(id: string): Promise<WorkDetail> {
    return request<WorkDetail>(this.base, `/api/works/${encodeURIComponent(id)}`);
  }

  fetchStats(): Promise<StatsResponse> {
    return request<StatsResponse>(this.base, "/api/stats");
  }

  postDecision(id: string, body: DecisionBody): Promise<DecisionResponse> {
    return request<DecisionResponse>(this.base, `/api/items/${encodeURIComponent(id)}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  /** Server truth for one item, used to reconcile after a 409. */
  async refetchItem(id: string): Promise<ReviewItem> {
    const detail = await this.fetchItem(id);
    const { context: _context, ...item } = detail;
    return item;
  }
}
