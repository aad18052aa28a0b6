/** Keyboard bindings for high-throughput review. */

export type ShortcutAction =
  | "approve"
  | "reject"
  | "skip"
  | "prev"
  | "next"
  | "prevPage"
  | "nextPage"
  | "help";

export const SHORTCUTS: Record<string, ShortcutAction> = {
  a: "approve",
  r: "reject",
  s: "skip",
  j: "next",
  k: "prev",
  ArrowDown: "next",
  ArrowUp: "prev",
  "[": "prevPage",
  "]": "nextPage",
  "?": "help",
};

/** Map a keydown to an action; returns null for unbound keys or when the
 * event originates in a text input (so typing a reason never triggers
 * review actions). */
export function resolveShortcut(event: {
  key: string;
  target?: { tagName?: string } | null;
  ctrlKey?: boolean;
  metaKey?: boolean;
  altKey?: boolean;
}): ShortcutAction | null {
  if (event.ctrlKey || event.metaKey || event.altKey) return null;
  const tag = event.target?.tagName?.toUpperCase();
  if (tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT") return null;
  return SHORTCUTS[event.key] ?? null;
}
