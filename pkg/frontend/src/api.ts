import type { VerdictPayload } from "./state.js";
import type { Census, EffectiveVerdict, IdentityDetail, Progress, QueueRow } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface ApiOptions {
  /** origin prefix, empty when the UI is served by the review service itself */
  base?: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export function createApi(opts: ApiOptions = {}) {
  const base = opts.base ?? "";
  const doFetch = opts.fetchImpl ?? globalThis.fetch.bind(globalThis);
  const baseHeaders: Record<string, string> = {};
  if (opts.token) baseHeaders["X-Review-Token"] = opts.token;

  async function request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = { ...baseHeaders };
    if (init?.body) headers["Content-Type"] = "application/json";
    const res = await doFetch(base + path, { ...init, headers });
    let body: unknown = null;
    try {
      body = await res.json();
    } catch {
      body = null;
    }
    if (!res.ok) {
      const message =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : `${res.status} ${res.statusText}`;
      throw new ApiError(res.status, message);
    }
    return body as T;
  }

  return {
    queue: () => request<QueueRow[]>("/api/queue"),
    identity: (id: string) =>
      request<IdentityDetail>(`/api/identity/${encodeURIComponent(id)}`),
    progress: () => request<Progress>("/api/progress"),
    submitVerdict: (payload: VerdictPayload) =>
      request<{ ok: boolean; effective_verdict: EffectiveVerdict }>("/api/verdict", {
        method: "POST",
        body: JSON.stringify(payload),
      }),
    apply: (minRemaining: number) =>
      request<Census>("/api/apply", {
        method: "POST",
        body: JSON.stringify({ min_remaining: minRemaining }),
      }),
    imageUrl: (url: string) => base + url,
  };
}

export type Api = ReturnType<typeof createApi>;
