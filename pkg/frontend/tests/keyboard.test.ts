import { describe, expect, it, vi } from "vitest";

import { dispatchKey, type KeyBindings } from "../src/keyboard";

function bindings(): KeyBindings & { calls: string[] } {
  const calls: string[] = [];
  return {
    calls,
    onNext: () => calls.push("next"),
    onPrevious: () => calls.push("prev"),
    onOpen: () => calls.push("open"),
    onAction: (action) => calls.push(action),
  };
}

describe("keyboard dispatch", () => {
  it("maps navigation and decision keys", () => {
    const b = bindings();
    for (const key of ["j", "ArrowDown", "k", "ArrowUp", "Enter", "a", "r", "n", "1", "2", "3"]) {
      expect(dispatchKey({ key }, b)).toBe(true);
    }
    expect(b.calls).toEqual([
      "next", "next", "prev", "prev", "open",
      "approve", "reject", "annotate", "add", "delete", "keep",
    ]);
  });

  it("ignores keys while typing in form fields", () => {
    const b = bindings();
    expect(dispatchKey({ key: "a", targetTag: "INPUT" }, b)).toBe(false);
    expect(dispatchKey({ key: "j", targetTag: "textarea" }, b)).toBe(false);
    expect(b.calls).toEqual([]);
  });

  it("ignores unmapped keys and disabled state", () => {
    const b = bindings();
    expect(dispatchKey({ key: "z" }, b)).toBe(false);
    expect(dispatchKey({ key: "a" }, b, false)).toBe(false);
    expect(b.calls).toEqual([]);
  });
});

describe("poller", () => {
  it("does not overlap slow ticks", async () => {
    vi.useFakeTimers();
    const { createPoller } = await import("../src/poll");
    let active = 0;
    let maxActive = 0;
    const poller = createPoller(async () => {
      active += 1;
      maxActive = Math.max(maxActive, active);
      await new Promise((resolve) => setTimeout(resolve, 12_000)); // slower than the interval
      active -= 1;
    }, 5000);
    poller.start();
    await vi.advanceTimersByTimeAsync(30_000);
    poller.stop();
    expect(maxActive).toBe(1);
    vi.useRealTimers();
  });
});
