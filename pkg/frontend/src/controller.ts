/** App state machine: one screen at a time, edits only through schema-checked
 * setters, and a per-draft idempotency key so a retried submit can never
 * create a second revision. Rendering subscribes via onChange.
 */

import { ApiClient, ApiError } from "./api";
import {
  draftIssues,
  eligibleDealers,
  newDraft,
  toPayload,
  type DraftIssue,
} from "./draft";
import type { Draft, HomepageDoc, SchemaDoc, TaskDoc } from "./types";

export interface HomepageState {
  userId: string;
  status: "loading" | "ready" | "not_found" | "error";
  doc: HomepageDoc | null;
  message: string;
}

export interface TaskView {
  task: TaskDoc;
  draft: Draft;
  dirty: boolean;
  /** Regenerated on every edit, stable across retries of the same content. */
  idempotencyKey: string;
  issues: DraftIssue[];
  /** Field path to mark in the form (from local checks or a 422 response). */
  highlight: string | null;
  banner: string | null;
  toast: string | null;
  submitting: boolean;
  homepage: HomepageState | null;
}

export type UiState =
  | { kind: "booting" }
  | { kind: "auth_required"; message: string }
  | { kind: "loading" }
  | { kind: "idle"; message: string }
  | { kind: "task"; view: TaskView }
  | { kind: "error"; message: string };

export type ClientFactory = (token: string) => ApiClient;

export interface ControllerOptions {
  onChange?: (state: UiState) => void;
  onToken?: (token: string) => void;
  makeKey?: () => string;
}

function defaultKey(): string {
  const c = (globalThis as { crypto?: { randomUUID?: () => string } }).crypto;
  if (c?.randomUUID) return c.randomUUID();
  return `key-${Date.now().toString(36)}-${Math.random().toString(36).slice(2)}`;
}

function describeFailure(err: unknown): string {
  const detail = err instanceof Error ? `: ${err.message}` : "";
  return `cannot reach the server${detail}`;
}

export class Controller {
  state: UiState = { kind: "booting" };
  schema: SchemaDoc | null = null;

  private client: ApiClient;
  private token: string | null = null;
  private readonly onChange: (state: UiState) => void;
  private readonly onToken: (token: string) => void;
  private readonly makeKey: () => string;

  constructor(
    private readonly clientFactory: ClientFactory,
    opts: ControllerOptions = {},
  ) {
    this.onChange = opts.onChange ?? (() => {});
    this.onToken = opts.onToken ?? (() => {});
    this.makeKey = opts.makeKey ?? defaultKey;
    this.client = clientFactory("");
  }

  private set(state: UiState): void {
    this.state = state;
    this.onChange(state);
  }

  private get view(): TaskView | null {
    return this.state.kind === "task" ? this.state.view : null;
  }

  private touchView(): void {
    if (this.state.kind === "task") this.set({ kind: "task", view: this.state.view });
  }

  private authRequired(message: string): void {
    this.token = null;
    this.set({ kind: "auth_required", message });
  }

  // -- session ------------------------------------------------------------

  async start(token: string | null): Promise<void> {
    this.token = token && token.trim().length > 0 ? token.trim() : null;
    this.client = this.clientFactory(this.token ?? "");
    if (this.schema === null) {
      try {
        this.schema = await this.client.schema();
      } catch (err) {
        this.set({ kind: "error", message: describeFailure(err) });
        return;
      }
    }
    if (this.token === null) {
      this.set({ kind: "auth_required", message: "enter your access token to start labeling" });
      return;
    }
    await this.loadNext(null);
  }

  async setToken(token: string): Promise<void> {
    const trimmed = token.trim();
    if (!trimmed) {
      this.set({ kind: "auth_required", message: "token must not be empty" });
      return;
    }
    this.onToken(trimmed);
    await this.start(trimmed);
  }

  async retry(): Promise<void> {
    await this.start(this.token);
  }

  // -- task flow ----------------------------------------------------------

  async loadNext(toast: string | null): Promise<void> {
    this.set({ kind: "loading" });
    let task: TaskDoc;
    try {
      task = await this.client.nextTask();
    } catch (err) {
      if (err instanceof ApiError) {
        if (err.status === 401) {
          this.authRequired(`token rejected: ${err.message}`);
        } else if (err.code === "none_remaining") {
          this.set({ kind: "idle", message: toast ? `${toast} — ${err.message}` : err.message });
        } else {
          this.set({ kind: "error", message: err.message });
        }
      } else {
        this.set({ kind: "error", message: describeFailure(err) });
      }
      return;
    }
    const schema = this.requireSchema();
    const draft = newDraft(task);
    this.set({
      kind: "task",
      view: {
        task,
        draft,
        dirty: false,
        idempotencyKey: this.makeKey(),
        issues: draftIssues(schema, task, draft),
        highlight: null,
        banner: null,
        toast,
        submitting: false,
        homepage: null,
      },
    });
  }

  private requireSchema(): SchemaDoc {
    if (this.schema === null) throw new Error("controller used before start()");
    return this.schema;
  }

  // -- draft edits --------------------------------------------------------

  private edit(mutate: (view: TaskView) => void): void {
    const view = this.view;
    if (view === null || view.submitting) return;
    mutate(view);
    view.dirty = true;
    view.idempotencyKey = this.makeKey();
    view.issues = draftIssues(this.requireSchema(), view.task, view.draft);
    view.highlight = null;
    view.banner = null;
    this.touchView();
  }

  private requireEnum(value: string, allowed: string[], label: string): void {
    if (!allowed.includes(value)) {
      throw new Error(`${label} ${JSON.stringify(value)} is not in the schema`);
    }
  }

  setDrugForm(value: string): void {
    this.requireEnum(value, this.requireSchema().enums.drug_form, "drug form");
    this.edit((v) => {
      v.draft.image.drug_form = value;
    });
  }

  setContactApp(value: string): void {
    this.requireEnum(value, this.requireSchema().enums.contact_app, "contact app");
    this.edit((v) => {
      v.draft.image.contact_app = value;
    });
  }

  setCommentRole(commentId: string, role: string): void {
    this.requireEnum(role, this.requireSchema().enums.comment_role, "comment role");
    const view = this.view;
    if (view === null) return;
    const row = view.draft.comments.find((c) => c.comment_id === commentId);
    if (row === undefined) throw new Error(`no comment ${JSON.stringify(commentId)} on this task`);
    this.edit(() => {
      row.role = role;
    });
  }

  setCommentContact(commentId: string, flag: boolean): void {
    const view = this.view;
    if (view === null) return;
    const row = view.draft.comments.find((c) => c.comment_id === commentId);
    if (row === undefined) throw new Error(`no comment ${JSON.stringify(commentId)} on this task`);
    this.edit(() => {
      row.has_contact_info = flag;
    });
  }

  setContainsDealer(flag: boolean): void {
    this.edit((v) => {
      v.draft.verdict.contains_dealer = flag;
      if (!flag) v.draft.verdict.dealer_user_ids = [];
    });
  }

  toggleDealer(userId: string): void {
    const view = this.view;
    if (view === null || view.draft.verdict.contains_dealer !== true) return;
    if (!eligibleDealers(view.task).includes(userId)) {
      throw new Error(`${JSON.stringify(userId)} is not on this post`);
    }
    this.edit((v) => {
      const ids = v.draft.verdict.dealer_user_ids;
      const at = ids.indexOf(userId);
      if (at >= 0) ids.splice(at, 1);
      else ids.push(userId);
    });
  }

  canSubmit(): boolean {
    const view = this.view;
    return view !== null && !view.submitting && view.issues.length === 0;
  }

  // -- submit -------------------------------------------------------------

  async submit(): Promise<void> {
    const view = this.view;
    if (view === null || view.submitting) return;
    if (view.issues.length > 0) {
      const first = view.issues[0];
      if (first !== undefined) {
        view.highlight = first.field;
        view.banner = first.message;
      }
      this.touchView();
      return;
    }
    view.submitting = true;
    view.banner = null;
    view.toast = null;
    this.touchView();
    try {
      const done = await this.client.submit(
        view.task.task_id,
        toPayload(view.draft),
        view.idempotencyKey,
      );
      await this.loadNext(`saved ${done.task_id} (revision ${done.n_revisions})`);
    } catch (err) {
      if (this.view !== view) return;
      view.submitting = false;
      if (err instanceof ApiError) {
        if (err.status === 401) {
          this.authRequired(`token rejected: ${err.message}`);
          return;
        }
        view.highlight = err.field;
        view.banner = err.message;
      } else {
        view.banner = "cannot reach the server — your draft is kept; submitting again is safe";
      }
      this.touchView();
    }
  }

  // -- homepage drawer ----------------------------------------------------

  async openHomepage(userId: string): Promise<void> {
    const view = this.view;
    if (view === null) return;
    view.homepage = { userId, status: "loading", doc: null, message: "" };
    this.touchView();
    let next: HomepageState;
    try {
      const doc = await this.client.homepage(userId);
      next = { userId, status: "ready", doc, message: "" };
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        this.authRequired(`token rejected: ${err.message}`);
        return;
      }
      if (err instanceof ApiError && err.status === 404) {
        next = { userId, status: "not_found", doc: null, message: err.message };
      } else {
        next = { userId, status: "error", doc: null, message: describeFailure(err) };
      }
    }
    if (this.view !== view || view.homepage?.userId !== userId) return;
    view.homepage = next;
    this.touchView();
  }

  closeHomepage(): void {
    const view = this.view;
    if (view === null || view.homepage === null) return;
    view.homepage = null;
    this.touchView();
  }
}
