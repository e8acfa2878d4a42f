/**
 * Queue controller: the single client-side source of state.
 *
 * All state is reconstructible from API responses alone; a hard refresh and
 * a `refresh()` call land in the same place. Decisions update optimistically
 * (the row leaves the pending list immediately), then reconcile: a 200 keeps
 * the optimistic move, a 409 refetches the item and surfaces the decided
 * server state, anything else restores the row and re-enables the form.
 */

import { ApiError, ReviewApi } from "./api.js";
import { isSubmittable } from "./actions.js";
import type {
  DecisionAction,
  QueueFilters,
  ReviewItem,
  StatsResponse,
} from "./types.js";

export interface SubmitOutcome {
  status: "applied" | "conflict" | "error";
  item?: ReviewItem;
  message?: string;
}

export type Listener = () => void;

export class QueueController {
  items: ReviewItem[] = [];
  total = 0;
  nextCursor: string | null = null;
  filters: QueueFilters = { state: "pending" };
  selectedIndex = 0;
  stats: StatsResponse | null = null;
  banner: string | null = null;
  /** Item ids with a POST in flight; blocks double submission. */
  readonly inFlight = new Set<string>();

  private listeners: Listener[] = [];

  constructor(readonly api: ReviewApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  selected(): ReviewItem | null {
    return this.items[this.selectedIndex] ?? null;
  }

  select(index: number): void {
    if (this.items.length === 0) {
      this.selectedIndex = 0;
    } else {
      this.selectedIndex = Math.max(0, Math.min(index, this.items.length - 1));
    }
    this.notify();
  }

  selectNext(): void {
    this.select(this.selectedIndex + 1);
  }

  selectPrevious(): void {
    this.select(this.selectedIndex - 1);
  }

  async refresh(): Promise<void> {
    try {
      // Keep the depth the user has paged to; a poll never collapses it.
      const limit = Math.max(50, this.items.length);
      const [queue, stats] = await Promise.all([
        this.api.fetchQueue(this.filters, undefined, limit),
        this.api.fetchStats(),
      ]);
      this.items = queue.items;
      this.total = queue.total;
      this.nextCursor = queue.next_cursor;
      this.stats = stats;
      this.banner = null;
    } catch (err) {
      // API down: keep the last good view, surface a non-blocking banner.
      this.banner = err instanceof ApiError ? `API unreachable: ${err.message}` : String(err);
    }
    this.select(this.selectedIndex);
  }

  async loadMore(): Promise<void> {
    if (!this.nextCursor) return;
    const queue = await this.api.fetchQueue(this.filters, this.nextCursor);
    this.items = this.items.concat(queue.items);
    this.nextCursor = queue.next_cursor;
    this.total = queue.total;
    this.notify();
  }

  async setFilters(filters: QueueFilters): Promise<void> {
    this.filters = filters;
    this.selectedIndex = 0;
    await this.refresh();
  }

  /**
   * Submit a decision. Illegal submissions (wrong action for the kind,
   * non-pending item, or an in-flight duplicate) are rejected locally and
   * never reach the wire.
   */
  async submitDecision(
    itemId: string,
    action: DecisionAction,
    note?: string,
    conceptEdit?: Record<string, unknown>,
  ): Promise<SubmitOutcome> {
    const index = this.items.findIndex((i) => i.id === itemId);
    const item = this.items[index];
    if (!item) return { status: "error", message: `unknown item ${itemId}` };
    if (this.inFlight.has(itemId)) {
      return { status: "error", message: "submission already in flight" };
    }
    if (!isSubmittable(item, action)) {
      return { status: "error", message: `action '${action}' not submittable for ${item.kind}/${item.state}` };
    }

    this.inFlight.add(itemId);
    // Optimistic: the row leaves the pending view immediately.
    const showingPending = this.filters.state === "pending";
    if (showingPending) {
      this.items = this.items.filter((i) => i.id !== itemId);
      if (this.stats) this.stats = { ...this.stats, queue_depth: Math.max(0, this.stats.queue_depth - 1) };
      this.notify();
    }
    try {
      const response = await this.api.postDecision(itemId, {
        action,
        note,
        concept_edit: conceptEdit,
      });
      if (!showingPending && index >= 0) {
        this.items = this.items.map((i) => (i.id === itemId ? response.item : i));
      }
      this.notify();
      return { status: "applied", item: response.item };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Someone else decided first: reconcile to server truth.
        const serverItem = await this.api.refetchItem(itemId);
        if (!showingPending) {
          this.items = this.items.map((i) => (i.id === itemId ? serverItem : i));
        }
        this.notify();
        return { status: "conflict", item: serverItem, message: err.message };
      }
      // 422 / network: restore the optimistic removal, re-enable the form.
      if (showingPending && index >= 0) {
        this.items = [...this.items.slice(0, index), item, ...this.items.slice(index)];
        if (this.stats) this.stats = { ...this.stats, queue_depth: this.stats.queue_depth + 1 };
      }
      this.notify();
      const message = err instanceof ApiError ? err.message : String(err);
      return { status: "error", message };
    } finally {
      this.inFlight.delete(itemId);
    }
  }
}
