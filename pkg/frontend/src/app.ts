/**
 * Review app: queue list, identity inspection, verdict submission, apply.
 *
 * All durable state lives server-side; the only client-local state is the
 * in-flight draft. Re-mounting the app reproduces the server's view, so a
 * page reload never loses a committed verdict.
 */

import { ApiError, type Api } from "./api.js";
import {
  MISLABEL_KINDS,
  canSubmit,
  createDraft,
  cycleKind,
  selectionLocked,
  setKind,
  toPayload,
  toggleSample,
  type Draft,
  type MislabelKind,
} from "./state.js";
import type { Census, IdentityDetail, Progress, QueueRow } from "./types.js";

const FALLBACK_TILE =
  "data:image/svg+xml," +
  encodeURIComponent(
    '<svg xmlns="http://www.w3.org/2000/svg" width="96" height="96">' +
    '<rect width="96" height="96" fill="#ccc"/></svg>',
  );

const KIND_LABELS: Record<MislabelKind, string> = {
  TYPE_A: "A: main identity + strays",
  TYPE_B: "B: mixed folder, no main identity",
  TYPE_C: "C: two identities",
  HIGH_VARIATION: "High variation (keep all)",
};

export interface AppOptions {
  api: Api;
  reviewer?: string;
}

export class ReviewApp {
  private readonly api: Api;
  private readonly root: HTMLElement;
  private readonly doc: Document;
  private reviewer: string;

  private rows: QueueRow[] = [];
  private progress: Progress | null = null;
  private detail: IdentityDetail | null = null;
  private draft: Draft | null = null;
  private fetchError: string | null = null;
  private submitError: string | null = null;
  private census: Census | null = null;
  private focusedPair: { a: string; b: string } | null = null;

  constructor(root: HTMLElement, opts: AppOptions) {
    this.root = root;
    this.doc = root.ownerDocument;
    this.api = opts.api;
    this.reviewer = opts.reviewer ?? "reviewer";
    this.root.addEventListener("keydown", (e) => this.onKey(e as KeyboardEvent));
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  /** Re-fetch queue and progress; on failure show the retry banner, keep state. */
  async refresh(): Promise<void> {
    try {
      const [rows, progress] = await Promise.all([this.api.queue(), this.api.progress()]);
      this.rows = rows;
      this.progress = progress;
      this.fetchError = null;
    } catch (err) {
      this.fetchError = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async open(identityId: string): Promise<void> {
    try {
      const detail = await this.api.identity(identityId);
      this.detail = detail;
      this.draft = createDraft(
        identityId,
        detail.samples.map((s) => s.sample_id),
        detail.effective_verdict,
        this.reviewer,
      );
      this.submitError = null;
      this.focusedPair = null;
    } catch (err) {
      this.fetchError = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async submit(): Promise<void> {
    if (!this.draft || !canSubmit(this.draft)) return;
    const current = this.draft.identityId;
    try {
      await this.api.submitVerdict(toPayload(this.draft));
      this.submitError = null;
    } catch (err) {
      // the draft is preserved: nothing is cleared on failure
      this.submitError = err instanceof ApiError ? err.message : "network failure, retry";
      this.render();
      return;
    }
    await this.refresh();
    const next = this.nextPending(current);
    if (next) {
      await this.open(next);
    } else {
      this.detail = null;
      this.draft = null;
      this.render();
    }
  }

  async runApply(minRemaining: number): Promise<void> {
    try {
      this.census = await this.api.apply(minRemaining);
      this.submitError = null;
    } catch (err) {
      this.submitError = err instanceof ApiError ? err.message : "apply failed";
    }
    this.render();
  }

  toggle(sampleId: string): void {
    if (!this.draft) return;
    if (toggleSample(this.draft, sampleId)) this.render();
  }

  choose(kind: MislabelKind): void {
    if (!this.draft) return;
    setKind(this.draft, kind);
    this.render();
  }

  private onKey(e: KeyboardEvent): void {
    if (!this.draft) return;
    const digit = Number.parseInt(e.key, 10);
    if (digit >= 1 && digit <= MISLABEL_KINDS.length) {
      this.choose(MISLABEL_KINDS[digit - 1]);
    } else if (e.key === "m") {
      cycleKind(this.draft);
      this.render();
    }
  }

  private nextPending(after: string): string | null {
    const pending = this.rows.filter((r) => r.status === "pending");
    if (pending.length === 0) return null;
    const later = pending.find((r) => r.identity_id > after);
    return (later ?? pending[0]).identity_id;
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    attrs: Record<string, string> = {},
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private render(): void {
    this.root.textContent = "";
    this.root.appendChild(this.renderHeader());
    if (this.fetchError !== null) {
      this.root.appendChild(this.renderRetryBanner());
    }
    const main = this.el("main", { class: "layout" });
    main.appendChild(this.renderQueue());
    if (this.progress && this.progress.pending === 0 && this.progress.total > 0) {
      main.appendChild(this.renderApplyPanel());
    } else if (this.detail) {
      main.appendChild(this.renderDetail());
    } else {
      main.appendChild(
        this.el("section", { id: "identity-placeholder" }, "Select an identity to review."),
      );
    }
    this.root.appendChild(main);
  }

  private renderHeader(): HTMLElement {
    const header = this.el("header", { id: "progress" });
    const p = this.progress;
    header.appendChild(this.el("h1", {}, "idclean review"));
    header.appendChild(
      this.el(
        "span",
        { id: "progress-counts" },
        p ? `${p.done} done / ${p.pending} pending of ${p.total}` : "loading…",
      ),
    );
    return header;
  }

  private renderRetryBanner(): HTMLElement {
    const banner = this.el("div", { id: "retry-banner", role: "alert" });
    banner.appendChild(this.el("span", {}, `service unreachable: ${this.fetchError}`));
    const btn = this.el("button", { id: "retry-btn" }, "retry");
    btn.addEventListener("click", () => void this.refresh());
    banner.appendChild(btn);
    return banner;
  }

  private renderQueue(): HTMLElement {
    const aside = this.el("aside", { id: "queue" });
    if (this.progress && this.progress.pending === 0 && this.progress.total > 0) {
      aside.appendChild(
        this.el("div", { id: "all-done-banner" }, "All identities reviewed — apply below."),
      );
    }
    const list = this.el("ul", { id: "queue-list" });
    for (const row of this.rows) {
      const item = this.el("li", {
        class: "queue-item",
        "data-identity": row.identity_id,
        "data-status": row.status,
      });
      item.appendChild(this.el("span", { class: "qid" }, row.identity_id));
      item.appendChild(this.el("span", { class: "qscore" }, row.id_score.toFixed(3)));
      item.appendChild(this.el("span", { class: "badge" }, row.status));
      item.addEventListener("click", () => void this.open(row.identity_id));
      list.appendChild(item);
    }
    aside.appendChild(list);
    return aside;
  }

  private renderDetail(): HTMLElement {
    const detail = this.detail!;
    const draft = this.draft!;
    const section = this.el("section", {
      id: "identity-detail",
      "data-identity": detail.identity_id,
      tabindex: "0",
    });
    section.appendChild(
      this.el(
        "h2",
        {},
        `${detail.identity_id} — id score ${detail.id_score.toFixed(3)}, ` +
          `${detail.sample_count} samples`,
      ),
    );
    if (detail.no_specific_pair) {
      section.appendChild(
        this.el(
          "div",
          { class: "no-pair-banner" },
          "No specific pair exceeded the threshold; review the whole folder.",
        ),
      );
    }
    if (detail.effective_verdict) {
      section.appendChild(
        this.el(
          "div",
          { id: "effective-verdict" },
          `recorded verdict: ${detail.effective_verdict.mislabel_type}` +
            (detail.effective_verdict.removed_samples.length
              ? ` removing ${detail.effective_verdict.removed_samples.join(", ")}`
              : ""),
        ),
      );
    }
    section.appendChild(this.renderPairStrip(detail));
    section.appendChild(this.renderGrid(detail, draft));
    section.appendChild(this.renderControls(draft));
    return section;
  }

  private renderPairStrip(detail: IdentityDetail): HTMLElement {
    const strip = this.el("div", { id: "pair-strip" });
    // already served in descending-distance order: most suspicious first
    for (const pair of detail.flagged_pairs) {
      const box = this.el("div", {
        class: "pair",
        "data-a": pair.a,
        "data-b": pair.b,
      });
      for (const [sid, url] of [
        [pair.a, pair.a_url],
        [pair.b, pair.b_url],
      ] as const) {
        const img = this.el("img", {
          src: this.api.imageUrl(url),
          alt: sid,
          class: "pair-img",
        });
        this.guardImage(img);
        box.appendChild(img);
      }
      box.appendChild(this.el("span", { class: "distance" }, pair.distance.toFixed(3)));
      box.addEventListener("click", () => {
        this.focusedPair = { a: pair.a, b: pair.b };
        this.render();
        this.scrollToSample(pair.a);
      });
      strip.appendChild(box);
    }
    return strip;
  }

  private renderGrid(detail: IdentityDetail, draft: Draft): HTMLElement {
    const grid = this.el("div", { id: "sample-grid" });
    const locked = selectionLocked(draft);
    for (const sample of detail.samples) {
      const focused =
        this.focusedPair !== null &&
        (sample.sample_id === this.focusedPair.a || sample.sample_id === this.focusedPair.b);
      const tile = this.el("figure", {
        class:
          "sample-tile" +
          (sample.in_queue ? " in-queue" : "") +
          (draft.removed.has(sample.sample_id) ? " selected" : "") +
          (focused ? " focused" : "") +
          (locked ? " locked" : ""),
        "data-sample-id": sample.sample_id,
        "data-selected": draft.removed.has(sample.sample_id) ? "true" : "false",
      });
      const img = this.el("img", {
        src: this.api.imageUrl(sample.image_url),
        alt: sample.sample_id,
      });
      this.guardImage(img);
      tile.appendChild(img);
      const caption = sample.in_queue
        ? `${sample.sample_id} (queued, freq ${sample.frequency})`
        : sample.sample_id;
      tile.appendChild(this.el("figcaption", {}, caption));
      tile.addEventListener("click", () => this.toggle(sample.sample_id));
      grid.appendChild(tile);
    }
    return grid;
  }

  private renderControls(draft: Draft): HTMLElement {
    const controls = this.el("div", { id: "verdict-controls" });
    for (const kind of MISLABEL_KINDS) {
      const btn = this.el(
        "button",
        {
          class: "kind-btn",
          "data-kind": kind,
          "aria-pressed": draft.kind === kind ? "true" : "false",
        },
        KIND_LABELS[kind],
      );
      btn.addEventListener("click", () => this.choose(kind));
      controls.appendChild(btn);
    }
    const marked = this.el(
      "span",
      { id: "marked-count" },
      `${draft.removed.size} sample(s) marked for removal`,
    );
    controls.appendChild(marked);
    if (this.submitError !== null) {
      controls.appendChild(this.el("div", { id: "submit-error", role: "alert" }, this.submitError));
    }
    const submit = this.el("button", { id: "submit-verdict" }, "Submit verdict");
    if (!canSubmit(draft)) submit.setAttribute("disabled", "disabled");
    submit.addEventListener("click", () => void this.submit());
    controls.appendChild(submit);
    return controls;
  }

  private renderApplyPanel(): HTMLElement {
    const panel = this.el("section", { id: "apply-panel" });
    panel.appendChild(this.el("h2", {}, "Apply cleaning plan"));
    const input = this.el("input", {
      id: "min-remaining",
      type: "number",
      min: "1",
      value: "3",
    });
    panel.appendChild(this.el("label", {}, "minimum surviving samples per folder "));
    panel.appendChild(input);
    const btn = this.el("button", { id: "apply-btn" }, "Apply");
    btn.addEventListener("click", () => {
      const n = Number.parseInt((input as HTMLInputElement).value, 10) || 3;
      void this.runApply(n);
    });
    panel.appendChild(btn);
    if (this.submitError !== null) {
      panel.appendChild(this.el("div", { id: "submit-error", role: "alert" }, this.submitError));
    }
    if (this.census) {
      panel.appendChild(
        this.el("pre", { id: "census" }, JSON.stringify(this.census, null, 2)),
      );
    }
    return panel;
  }

  private guardImage(img: HTMLImageElement): void {
    img.addEventListener("error", () => {
      if (img.dataset.fallback) return;
      img.dataset.fallback = "1";
      img.src = FALLBACK_TILE;
    });
  }

  private scrollToSample(sampleId: string): void {
    const tile = this.root.querySelector(`[data-sample-id="${sampleId}"]`);
    if (tile && typeof (tile as HTMLElement).scrollIntoView === "function") {
      (tile as HTMLElement).scrollIntoView({ block: "nearest" });
    }
  }
}

export function mountApp(root: HTMLElement, opts: AppOptions): ReviewApp {
  const app = new ReviewApp(root, opts);
  void app.start();
  return app;
}
