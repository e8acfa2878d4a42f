/**
 * Pure HTML renderers. No DOM access here; main.ts owns the document.
 *
 * Everything interpolated into markup goes through esc(); payload text is
 * untrusted (concept names come from model output).
 */

import { legalActions } from "./actions.js";
import type { ItemDetail, ReviewItem, StatsResponse } from "./types.js";

export function esc(text: unknown): string {
  return String(text ?? "")
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const KIND_BADGES: Record<string, string> = {
  segmentation: "SEG",
  pair: "PAIR",
  triplet: "TRIP",
  refinement: "REFINE",
};

function summarize(item: ReviewItem): string {
  const payload = item.payload as Record<string, unknown>;
  const pair = payload["pair"] as [string, string] | undefined;
  if (item.kind === "refinement" && payload["proposed_intermediate"]) {
    return `${pair?.[0] ?? "?"} → ${payload["proposed_intermediate"]} → ${pair?.[1] ?? "?"}`;
  }
  if (pair) return `[${pair[0]}, ${pair[1]}]`;
  if (payload["error"]) return String(payload["error"]);
  return item.id;
}

export function renderQueue(items: ReviewItem[], selectedIndex: number, nextCursor: string | null = null): string {
  if (items.length === 0) {
    return '<p class="empty">No pending items.</p>';
  }
  const grouped = new Map<string, ReviewItem[]>();
  for (const item of items) {
    const bucket = grouped.get(item.work_id) ?? [];
    bucket.push(item);
    grouped.set(item.work_id, bucket);
  }
  const rows: string[] = [];
  for (const [workId, bucket] of grouped) {
    rows.push(`<li class="work-group">work ${esc(workId)}</li>`);
    for (const item of bucket) {
      const flatIndex = items.indexOf(item);
      rows.push(
        `<li class="item${flatIndex === selectedIndex ? " selected" : ""}" data-item-id="${esc(item.id)}">` +
          `<span class="badge badge-${esc(item.kind)}">${esc(KIND_BADGES[item.kind] ?? item.kind)}</span>` +
          `<span class="summary">${esc(summarize(item))}</span>` +
          `<span class="state">${esc(item.state)}</span>` +
          `<span class="age">${esc(item.created_at)}</span>` +
          `</li>`,
      );
    }
  }
  const more = nextCursor
    ? `<button class="load-more" data-load-more="${esc(nextCursor)}">load more</button>`
    : "";
  return `<ul class="queue">${rows.join("")}</ul>${more}`;
}

/** Escape, then wrap case-insensitive occurrences of the terms in <mark>. */
export function highlightTerms(text: string, terms: string[]): string {
  let html = esc(text);
  for (const term of terms.filter((t) => t.length > 0)) {
    const pattern = new RegExp(esc(term).replace(/[.*+?^${}()|[\]\\]/g, "\\$&"), "gi");
    html = html.replace(pattern, (match) => `<mark>${match}</mark>`);
  }
  return html;
}

export function renderItemDetail(detail: ItemDetail, inFlight: boolean): string {
  const actions = detail.state === "pending" ? legalActions(detail.kind) : [];
  const buttons = actions
    .map(
      (action) =>
        `<button class="action" data-action="${esc(action)}" data-item-id="${esc(detail.id)}"` +
        `${inFlight ? " disabled" : ""}>${esc(action)}</button>`,
    )
    .join(" ");
  const payload = detail.payload as Record<string, unknown>;
  const pair = payload["pair"] as [string, string] | undefined;
  const chain =
    detail.kind === "refinement" && payload["proposed_intermediate"]
      ? `<div class="chain">${esc(pair?.[0])} → <strong>${esc(
          payload["proposed_intermediate"],
        )}</strong> → ${esc(pair?.[1])}</div>`
      : "";
  const decided =
    detail.state !== "pending"
      ? `<p class="decided">decided: ${esc(detail.state)} at ${esc(detail.decided_at)}</p>`
      : "";
  const fragment = detail.context.hierarchy_fragment
    .map(([parent, child]) => `<li>${esc(parent)} → ${esc(child)}</li>`)
    .join("");
  const nearMisses = (payload["near_misses"] as string[] | undefined) ?? [];
  const excerpt = payload["segment_excerpt"] as string | undefined;
  const candidateTerms = [
    ...(pair ?? []),
    ...(payload["proposed_intermediate"] ? [String(payload["proposed_intermediate"])] : []),
  ];
  const excerptBlock = excerpt
    ? `<blockquote class="excerpt" data-origin="${esc(payload["segment_origin"])}">` +
      `${highlightTerms(excerpt, candidateTerms)}</blockquote>`
    : "";
  return [
    `<h2>${esc(detail.kind)} · ${esc(detail.id)}</h2>`,
    `<p class="work-ref">work ${esc(detail.work_id)}</p>`,
    chain,
    excerptBlock,
    `<pre class="payload">${esc(JSON.stringify(detail.payload, null, 2))}</pre>`,
    nearMisses.length ? `<p class="near">KB near matches: ${esc(nearMisses.join(", "))}</p>` : "",
    detail.context.abstract ? `<details open><summary>abstract</summary><p>${esc(detail.context.abstract)}</p></details>` : "",
    fragment ? `<details open><summary>hierarchy fragment</summary><ul>${fragment}</ul></details>` : "",
    decided,
    `<div class="actions">${buttons}</div>`,
  ]
    .filter(Boolean)
    .join("\n");
}

export function renderStats(stats: StatsResponse | null): string {
  if (!stats) return "";
  const kinds = Object.entries(stats.pending_by_kind)
    .map(([kind, count]) => `${esc(kind)}: ${count}`)
    .join(" · ");
  return (
    `<span class="depth">queue ${stats.queue_depth}</span>` +
    (kinds ? `<span class="kinds">${kinds}</span>` : "") +
    `<span class="journal">journal ${stats.journal_length}</span>`
  );
}

export function renderBanner(message: string | null): string {
  return message ? `<div class="banner" role="alert">${esc(message)} — retrying…</div>` : "";
}
