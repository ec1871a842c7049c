/** Thin typed client for the annotation service; the app's only network path. */

import type {
  ErrorDoc,
  HomepageDoc,
  SchemaDoc,
  StatsDoc,
  SubmitPayload,
  TaskDoc,
} from "./types";

export const API_PREFIX = "/api/v1";

/** Non-2xx response carrying the service's {code, message, field?} body. */
export class ApiError extends Error {
  readonly status: number;
  readonly doc: ErrorDoc;

  constructor(status: number, doc: ErrorDoc) {
    super(doc.message);
    this.name = "ApiError";
    this.status = status;
    this.doc = doc;
  }

  get code(): string {
    return this.doc.code;
  }

  get field(): string | null {
    return this.doc.field ?? null;
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchFn: FetchFn = (url, init) => fetch(url, init),
  ) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
    extraHeaders?: Record<string, string>,
  ): Promise<unknown> {
    const headers: Record<string, string> = { ...extraHeaders };
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["content-type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.baseUrl + API_PREFIX + path, init);
    let doc: unknown;
    try {
      doc = await resp.json();
    } catch {
      doc = { code: "bad_response", message: `non-JSON response (HTTP ${resp.status})` };
    }
    if (!resp.ok) throw new ApiError(resp.status, doc as ErrorDoc);
    return doc;
  }

  schema(): Promise<SchemaDoc> {
    return this.request("GET", "/schema") as Promise<SchemaDoc>;
  }

  nextTask(): Promise<TaskDoc> {
    return this.request("GET", "/tasks/next") as Promise<TaskDoc>;
  }

  submit(taskId: string, payload: SubmitPayload, idempotencyKey: string): Promise<TaskDoc> {
    return this.request(
      "POST",
      `/tasks/${encodeURIComponent(taskId)}/submit`,
      payload,
      { "idempotency-key": idempotencyKey },
    ) as Promise<TaskDoc>;
  }

  homepage(userId: string): Promise<HomepageDoc> {
    return this.request(
      "GET",
      `/users/${encodeURIComponent(userId)}/homepage`,
    ) as Promise<HomepageDoc>;
  }

  stats(): Promise<StatsDoc> {
    return this.request("GET", "/stats") as Promise<StatsDoc>;
  }
}
