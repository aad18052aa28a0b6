import { describe, expect, it } from "vitest";

import { ApiClient, AuthError, ConflictError } from "../src/api.js";
import { ReviewStore, ValidationError } from "../src/store.js";
import { MockReviewServer, makeRows } from "./mockServer.js";

function setup(n = 25, token: string | null = null) {
  const server = new MockReviewServer(makeRows(n), token);
  const api = new ApiClient("http://mock", server.fetch);
  const store = new ReviewStore(api, "rev1");
  return { server, api, store };
}

describe("queue loading", () => {
  it("loads the pending page and stats", async () => {
    const { store } = setup();
    await store.load();
    const state = store.getState();
    expect(state.total).toBe(25);
    expect(state.items).toHaveLength(25);
    expect(state.stats?.by_status["Pending"]).toBe(25);
  });

  it("paginates", async () => {
    const { store } = setup(25);
    await store.setPage(0);
    store.getState().limit satisfies number;
    await store.setFilters({ status: "Pending" });
    const page2 = await new ApiClient(
      "http://mock",
      setup(25).server.fetch,
    ).queue({ status: "Pending" }, 10, 20);
    expect(page2.items).toHaveLength(5);
  });

  it("corpus filter matches server stats", async () => {
    const { store, api } = setup(20);
    await store.setFilters({ status: "Pending", corpus: "SPAR" });
    const stats = await api.stats();
    expect(store.getState().total).toBe(10);
    expect(stats.total).toBe(20);
  });
});

describe("optimistic decisions", () => {
  it("approving removes the item from the pending queue", async () => {
    const { store, server } = setup();
    await store.load();
    const first = store.selectedItem()!;
    const result = await store.decide(first.sample_id, "Approved");
    expect(result.status).toBe("Approved");
    expect(
      store.getState().items.some((i) => i.sample_id === first.sample_id),
    ).toBe(false);
    expect(store.getState().total).toBe(24);
    // and the server agrees after a fresh fetch
    await store.load();
    expect(store.getState().total).toBe(24);
    expect(server.statusOf(first.sample_id)).toBe("Approved");
  });

  it("removal happens before the server responds", async () => {
    const { store, server } = setup();
    await store.load();
    let release!: () => void;
    const gate = new Promise<void>((res) => (release = res));
    const slowFetch: typeof server.fetch = async (url, init) => {
      if (init?.method === "POST") await gate;
      return server.fetch(url, init);
    };
    const api = new ApiClient("http://mock", slowFetch);
    const slowStore = new ReviewStore(api, "rev1");
    await slowStore.load();
    const pending = slowStore.decide("q001", "Approved");
    // optimistic: already gone from the local page while the POST hangs
    expect(
      slowStore.getState().items.some((i) => i.sample_id === "q001"),
    ).toBe(false);
    release();
    await pending;
  });

  it("duplicated submit produces exactly one recorded decision", async () => {
    const { store, server } = setup();
    await store.load();
    const [a, b] = await Promise.all([
      store.decide("q003", "Approved"),
      store.decide("q003", "Approved"),
    ]);
    expect(a.status).toBe("Approved");
    expect(b.status).toBe("Approved");
    expect(server.postCount).toBe(1); // coalesced in flight
    expect(server.log).toHaveLength(1);
    // a later re-submit of the same decision replays the same revision:
    // the server log still holds a single entry
    await store.decide("q003", "Approved");
    expect(server.log).toHaveLength(1);
  });

  it("changing a decision bumps the revision and latest wins", async () => {
    const { store, server } = setup();
    await store.load();
    await store.decide("q004", "Approved");
    await store.decide("q004", "Rejected", "bad geometry");
    expect(server.statusOf("q004")).toBe("Rejected");
    expect(server.log.map((e) => e.revision)).toEqual([1, 2]);
  });

  it("reject without a reason fails client-side, nothing sent", async () => {
    const { store, server } = setup();
    await store.load();
    expect(() => store.decide("q005", "Rejected", "  ")).toThrow(
      ValidationError,
    );
    expect(server.postCount).toBe(0);
  });

  it("rolls back on server error", async () => {
    const { store, server } = setup();
    await store.load();
    const failing: typeof server.fetch = async (url, init) =>
      init?.method === "POST"
        ? new Response(JSON.stringify({ detail: "boom" }), { status: 500 })
        : server.fetch(url, init);
    const api = new ApiClient("http://mock", failing);
    const s = new ReviewStore(api, "rev1");
    await s.load();
    await expect(s.decide("q006", "Approved")).rejects.toThrow("boom");
    expect(s.getState().items.some((i) => i.sample_id === "q006")).toBe(true);
    expect(s.getState().items[0].status).toBe("Pending");
    expect(s.getState().lastError).toContain("boom");
  });

  it("conflict refetches server state", async () => {
    const rows = makeRows(5);
    const server = new MockReviewServer(rows, null, [
      {
        sample_id: "q002",
        decision: "Rejected",
        reviewer: "someone-else",
        revision: 1,
        reason: "dup",
      },
    ]);
    const store = new ReviewStore(new ApiClient("http://mock", server.fetch), "rev1");
    await store.load();
    await expect(store.decide("q002", "Approved")).rejects.toThrow(
      ConflictError,
    );
    // after the forced refetch the local queue matches the server again:
    // q002 is Rejected, so it is out of the pending view
    expect(
      store.getState().items.map((i) => i.sample_id),
    ).toEqual(["q000", "q001", "q003", "q004"]);
    expect(server.log).toHaveLength(1);
  });
});

describe("reload semantics", () => {
  it("a fresh store over the same server reproduces its state", async () => {
    const { store, server } = setup(12);
    await store.load();
    await store.decide("q000", "Approved");
    await store.decide("q007", "Rejected", "leaked answer");

    const fresh = new ReviewStore(
      new ApiClient("http://mock", server.fetch),
      "rev1",
    );
    await fresh.setFilters({}); // no status filter: full queue
    const byId = Object.fromEntries(
      fresh.getState().items.map((i) => [i.sample_id, i.status]),
    );
    expect(byId["q000"]).toBe("Approved");
    expect(byId["q007"]).toBe("Rejected");
    expect(fresh.getState().stats?.decisions).toBe(2);
    expect(
      Object.values(byId).filter((s) => s === "Pending"),
    ).toHaveLength(10);
  });
});

describe("auth", () => {
  it("401 without token, ok with it", async () => {
    const { api, store } = setup(3, "sekrit");
    await expect(store.load()).rejects.toThrow(AuthError);
    api.setToken("sekrit");
    await store.load();
    expect(store.getState().total).toBe(3);
  });
});
