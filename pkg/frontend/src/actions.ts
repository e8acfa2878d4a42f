/**
 * Action legality, mirrored from the server's rules.
 *
 * The UI never offers (or submits) an action outside this table; the server
 * enforces the same rule with 422, so this is a convenience, not the truth.
 */

import type { DecisionAction, ReviewItem, ReviewKind } from "./types.js";

export const LEGAL_ACTIONS: Record<ReviewKind, readonly DecisionAction[]> = {
  segmentation: ["approve", "reject", "annotate"],
  pair: ["approve", "reject", "annotate"],
  triplet: ["approve", "reject", "annotate"],
  refinement: ["add", "delete", "keep"],
};

export function legalActions(kind: ReviewKind): readonly DecisionAction[] {
  return LEGAL_ACTIONS[kind] ?? [];
}

export function isLegal(kind: ReviewKind, action: DecisionAction): boolean {
  return legalActions(kind).includes(action);
}

export function isSubmittable(item: ReviewItem, action: DecisionAction): boolean {
  return item.state === "pending" && isLegal(item.kind, action);
}
