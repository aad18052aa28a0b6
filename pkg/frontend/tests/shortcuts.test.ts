import { describe, expect, it } from "vitest";

import { resolveShortcut } from "../src/shortcuts.js";

describe("resolveShortcut", () => {
  it("maps review hotkeys", () => {
    expect(resolveShortcut({ key: "a" })).toBe("approve");
    expect(resolveShortcut({ key: "r" })).toBe("reject");
    expect(resolveShortcut({ key: "j" })).toBe("next");
    expect(resolveShortcut({ key: "ArrowUp" })).toBe("prev");
    expect(resolveShortcut({ key: "]" })).toBe("nextPage");
  });

  it("ignores unbound keys and modifier chords", () => {
    expect(resolveShortcut({ key: "x" })).toBeNull();
    expect(resolveShortcut({ key: "a", ctrlKey: true })).toBeNull();
    expect(resolveShortcut({ key: "r", metaKey: true })).toBeNull();
  });

  it("never fires while typing in a form field", () => {
    expect(
      resolveShortcut({ key: "a", target: { tagName: "INPUT" } }),
    ).toBeNull();
    expect(
      resolveShortcut({ key: "r", target: { tagName: "textarea" } }),
    ).toBeNull();
    expect(
      resolveShortcut({ key: "a", target: { tagName: "DIV" } }),
    ).toBe("approve");
  });
});
