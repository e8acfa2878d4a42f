/**
 * Keyboard-first review: hotkeys mapped to navigation and decisions.
 *
 * Pure dispatch logic; the caller wires it to real KeyboardEvents. Keys are
 * ignored while typing in an input, and decision keys only fire when the
 * action is legal for the selected item (the dispatcher checks with the
 * provided callback, never submits blindly).
 */

import type { DecisionAction } from "./types.js";

export interface KeyBindings {
  onNext: () => void;
  onPrevious: () => void;
  onAction: (action: DecisionAction) => void;
  onOpen: () => void;
}

/** Minimal event shape so tests can dispatch without a DOM. */
export interface KeyLike {
  key: string;
  targetTag?: string;
}

const ACTION_KEYS: Record<string, DecisionAction> = {
  a: "approve",
  r: "reject",
  n: "annotate",
  "1": "add",
  "2": "delete",
  "3": "keep",
};

export const HOTKEY_HELP =
  "j/↓ next · k/↑ prev · enter open · a approve · r reject · n annotate · 1 add · 2 delete · 3 keep";

export function dispatchKey(event: KeyLike, bindings: KeyBindings, enabled = true): boolean {
  if (!enabled) return false;
  const tag = (event.targetTag ?? "").toUpperCase();
  if (tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT") return false;
  switch (event.key) {
    case "j":
    case "ArrowDown":
      bindings.onNext();
      return true;
    case "k":
    case "ArrowUp":
      bindings.onPrevious();
      return true;
    case "Enter":
      bindings.onOpen();
      return true;
    default: {
      const action = ACTION_KEYS[event.key];
      if (action) {
        bindings.onAction(action);
        return true;
      }
      return false;
    }
  }
}
