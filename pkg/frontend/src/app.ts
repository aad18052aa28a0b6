/** DOM glue: renders the queue + detail panes and wires shortcuts.
 *
 * Deliberately framework-free — the state lives in ReviewStore and every
 * render is a pure function of it, so the view can never drift from what
 * the server confirmed.
 */

import { ApiClient, AuthError } from "./api.js";
import { resolveShortcut } from "./shortcuts.js";
import { ReviewStore, ValidationError, type StoreState } from "./store.js";
import type { QueueSummary, SampleDetail } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class App {
  private detail: SampleDetail | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly store: ReviewStore,
  ) {
    store.subscribe((state) => this.render(state));
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  async start(): Promise<void> {
    const token = sessionStorage.getItem("review_token");
    if (token) this.api.setToken(token);
    try {
      await this.store.load();
    } catch (err) {
      if (err instanceof AuthError) {
        this.renderLogin();
        return;
      }
      throw err;
    }
    await this.syncDetail();
  }

  private async syncDetail(): Promise<void> {
    const item = this.store.selectedItem();
    this.detail = item ? await this.api.sample(item.sample_id) : null;
    this.render(this.store.getState());
  }

  private onKey(ev: KeyboardEvent): void {
    const action = resolveShortcut({
      key: ev.key,
      target: ev.target instanceof Element ? ev.target : null,
      ctrlKey: ev.ctrlKey,
      metaKey: ev.metaKey,
      altKey: ev.altKey,
    });
    if (!action) return;
    ev.preventDefault();
    const item = this.store.selectedItem();
    switch (action) {
      case "approve":
        if (item) void this.submit(item, "Approved", "");
        break;
      case "reject":
        if (item) this.promptReject(item);
        break;
      case "skip":
      case "next":
        this.store.select(1);
        void this.syncDetail();
        break;
      case "prev":
        this.store.select(-1);
        void this.syncDetail();
        break;
      case "nextPage":
        void this.store
          .setPage(this.store.getState().offset + this.store.getState().limit)
          .then(() => this.syncDetail());
        break;
      case "prevPage":
        void this.store
          .setPage(this.store.getState().offset - this.store.getState().limit)
          .then(() => this.syncDetail());
        break;
      case "help":
        this.root.querySelector(".help")?.classList.toggle("hidden");
        break;
    }
  }

  private promptReject(item: QueueSummary): void {
    const reason = window.prompt(`Reject ${item.sample_id} — reason:`) ?? "";
    void this.submit(item, "Rejected", reason);
  }

  private async submit(
    item: QueueSummary,
    decision: "Approved" | "Rejected",
    reason: string,
  ): Promise<void> {
    try {
      await this.store.decide(item.sample_id, decision, reason);
    } catch (err) {
      if (err instanceof ValidationError) {
        window.alert(err.message);
        return;
      }
      // store already rolled back / refetched; the banner shows lastError
    }
    await this.syncDetail();
  }

  private renderLogin(): void {
    this.root.replaceChildren();
    const form = el("form", "login");
    const input = el("input");
    input.type = "password";
    input.placeholder = "review token";
    const button = el("button", "", "Sign in");
    form.append(el("h2", "", "Review sign-in"), input, button);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      sessionStorage.setItem("review_token", input.value);
      this.api.setToken(input.value);
      void this.start();
    });
    this.root.append(form);
  }

  private render(state: StoreState): void {
    this.root.replaceChildren();
    this.root.append(
      this.renderHeader(state),
      this.renderBody(state),
      this.renderHelp(),
    );
  }

  private renderHeader(state: StoreState): HTMLElement {
    const header = el("header");
    const stats = state.stats;
    const counts = stats
      ? `${stats.by_status["Pending"] ?? 0} pending · ` +
        `${stats.by_status["Approved"] ?? 0} approved · ` +
        `${stats.by_status["Rejected"] ?? 0} rejected`
      : "";
    header.append(el("h1", "", "Review queue"), el("span", "stats", counts));

    const select = el("select");
    for (const status of ["Pending", "Approved", "Rejected", ""]) {
      const opt = el("option", "", status || "All");
      opt.value = status;
      opt.selected = (state.filters.status ?? "") === status;
      select.append(opt);
    }
    select.addEventListener("change", () => {
      const status = select.value as "" | "Pending" | "Approved" | "Rejected";
      void this.store
        .setFilters({
          ...state.filters,
          status: status === "" ? undefined : status,
        })
        .then(() => this.syncDetail());
    });
    header.append(select);
    if (state.lastError) {
      header.append(el("div", "error", state.lastError));
    }
    return header;
  }

  private renderBody(state: StoreState): HTMLElement {
    const body = el("main");
    const list = el("ul", "queue");
    state.items.forEach((item, idx) => {
      const row = el(
        "li",
        idx === state.selected ? "selected" : "",
        `${item.sample_id} · ${item.corpus ?? "?"} · ` +
          `${item.task_category ?? "?"} · ${item.status}`,
      );
      row.addEventListener("click", () => {
        this.store.select(idx - state.selected);
        void this.syncDetail();
      });
      list.append(row);
    });
    if (state.items.length === 0) {
      list.append(el("li", "empty", "Nothing to review here."));
    }
    body.append(list, this.renderDetail());
    const page = Math.floor(state.offset / state.limit) + 1;
    const pages = Math.max(Math.ceil(state.total / state.limit), 1);
    body.append(el("footer", "", `page ${page} / ${pages} — ${state.total} items`));
    return body;
  }

  private renderDetail(): HTMLElement {
    const pane = el("section", "detail");
    const d = this.detail;
    if (!d) {
      pane.append(el("p", "empty", "Select a sample."));
      return pane;
    }
    pane.append(el("h2", "", `${d.sample_id} — ${d.status}`));
    if (d.query) pane.append(el("p", "query", d.query));
    for (const [kind, text] of d.record?.segments ?? []) {
      if (kind === "Image" && text) {
        const img = el("img");
        img.src = text;
        pane.append(img);
      } else if (text) {
        pane.append(el("p", `segment segment-${kind.toLowerCase()}`, text));
      }
    }
    if (d.verification) {
      pane.append(
        el("pre", "trail", JSON.stringify(d.verification, null, 2)),
      );
    }
    return pane;
  }

  private renderHelp(): HTMLElement {
    const help = el("div", "help hidden");
    help.append(
      el(
        "p",
        "",
        "a approve · r reject · s/j next · k prev · [ ] pages · ? help",
      ),
    );
    return help;
  }
}
