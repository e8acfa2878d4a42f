/**
 * Interval polling with overlap protection: a slow refresh never piles up
 * behind the next tick.
 */

export interface Poller {
  start(): void;
  stop(): void;
}

export const DEFAULT_POLL_INTERVAL_MS = 5000;

export function createPoller(tick: () => Promise<void>, intervalMs = DEFAULT_POLL_INTERVAL_MS): Poller {
  let timer: ReturnType<typeof setInterval> | null = null;
  let running = false;

  async function run(): Promise<void> {
    if (running) return;
    running = true;
    try {
      await tick();
    } finally {
      running = false;
    }
  }

  return {
    start() {
      if (timer !== null) return;
      void run();
      timer = setInterval(() => void run(), intervalMs);
    },
    stop() {
      if (timer !== null) {
        clearInterval(timer);
        timer = null;
      }
    },
  };
}
