/** Runtime configuration: one value, the API base URL. */

declare global {
  // Injected by the hosting page (window.__API_BASE__ = "http://host:port");
  // defaults to same-origin, which is what `conceptpaths serve --static` uses.
  var __API_BASE__: string | undefined;
}

export function apiBase(): string {
  return globalThis.__API_BASE__ ?? "";
}
