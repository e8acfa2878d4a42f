/**
 * DOM wiring. Everything testable lives in the other modules; this file only
 * binds the controller to the document and forwards events.
 */

import { ReviewApi } from "./api.js";
import { apiBase } from "./config.js";
import { dispatchKey, HOTKEY_HELP } from "./keyboard.js";
import { createPoller } from "./poll.js";
import { renderBanner, renderItemDetail, renderQueue, renderStats } from "./render.js";
import { QueueController } from "./state.js";
import type { DecisionAction, ItemDetail, ReviewKind, ReviewState } from "./types.js";

const api = new ReviewApi(apiBase());
const controller = new QueueController(api);

const queueEl = document.getElementById("queue")!;
const detailEl = document.getElementById("detail")!;
const statsEl = document.getElementById("stats")!;
const bannerEl = document.getElementById("banner")!;
const stateFilterEl = document.getElementById("filter-state") as HTMLSelectElement;
const kindFilterEl = document.getElementById("filter-kind") as HTMLSelectElement;
const workFilterEl = document.getElementById("filter-work") as HTMLInputElement;
const helpEl = document.getElementById("hotkeys")!;

let openDetail: ItemDetail | null = null;

function redraw(): void {
  queueEl.innerHTML = renderQueue(controller.items, controller.selectedIndex, controller.nextCursor);
  statsEl.innerHTML = renderStats(controller.stats);
  bannerEl.innerHTML = renderBanner(controller.banner);
  detailEl.innerHTML = openDetail
    ? renderItemDetail(openDetail, controller.inFlight.has(openDetail.id))
    : '<p class="empty">Select an item (enter) to review it.</p>';
}

controller.subscribe(redraw);

async function openSelected(): Promise<void> {
  const selected = controller.selected();
  if (!selected) return;
  try {
    openDetail = await api.fetchItem(selected.id);
  } catch {
    openDetail = null;
  }
  redraw();
}

async function act(action: DecisionAction): Promise<void> {
  const target = openDetail ?? controller.selected();
  if (!target) return;
  const outcome = await controller.submitDecision(target.id, action);
  if (outcome.status === "conflict" && openDetail && outcome.item) {
    openDetail = { ...openDetail, ...outcome.item };
  } else if (outcome.status === "applied") {
    openDetail = null;
  } else if (outcome.status === "error" && outcome.message) {
    controller.banner = outcome.message;
  }
  redraw();
}

queueEl.addEventListener("click", (event) => {
  if ((event.target as HTMLElement).closest("[data-load-more]")) {
    void controller.loadMore();
    return;
  }
  const row = (event.target as HTMLElement).closest("[data-item-id]");
  if (!row) return;
  const id = row.getAttribute("data-item-id");
  const index = controller.items.findIndex((i) => i.id === id);
  if (index >= 0) {
    controller.select(index);
    void openSelected();
  }
});

detailEl.addEventListener("click", (event) => {
  const button = (event.target as HTMLElement).closest("button[data-action]");
  if (!button || button.hasAttribute("disabled")) return;
  void act(button.getAttribute("data-action") as DecisionAction);
});

document.addEventListener("keydown", (event) => {
  const handled = dispatchKey(
    { key: event.key, targetTag: (event.target as HTMLElement)?.tagName },
    {
      onNext: () => controller.selectNext(),
      onPrevious: () => controller.selectPrevious(),
      onOpen: () => void openSelected(),
      onAction: (action) => void act(action),
    },
  );
  if (handled) event.preventDefault();
});

async function applyFilters(): Promise<void> {
  await controller.setFilters({
    state: stateFilterEl.value as ReviewState | "",
    kind: kindFilterEl.value as ReviewKind | "",
    work: workFilterEl.value.trim() || undefined,
  });
}

stateFilterEl.addEventListener("change", () => void applyFilters());
kindFilterEl.addEventListener("change", () => void applyFilters());
workFilterEl.addEventListener("change", () => void applyFilters());

helpEl.textContent = HOTKEY_HELP;

const poller = createPoller(() => controller.refresh());
poller.start();
