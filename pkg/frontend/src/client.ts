import type {
  EventsPage,
  HandoffReportView,
  MetricsView,
  SliceTemplate,
  ViewsDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    readonly detail: string,
    readonly body: Record<string, unknown> = {},
  ) {
    super(`${kind}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the management API. The fetch implementation is
 * injectable so tests can run without a server. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  get base(): string {
    return this.baseUrl;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const payload = (await resp.json()) as Record<string, unknown>;
    if (!resp.ok) {
      throw new ApiError(
        resp.status,
        typeof payload.error === "string" ? payload.error : "HttpError",
        typeof payload.detail === "string" ? payload.detail : resp.statusText,
        payload,
      );
    }
    return payload as T;
  }

  views(): Promise<ViewsDoc> {
    return this.request("GET", "/views");
  }

  metrics(): Promise<MetricsView> {
    return this.request("GET", "/metrics");
  }

  events(after: number, limit = 500): Promise<EventsPage> {
    return this.request("GET", `/events?after=${after}&limit=${limit}`);
  }

  advance(ms: number): Promise<{ t_ms: number }> {
    return this.request("POST", "/clock/advance", { ms });
  }

  createSlice(template: SliceTemplate): Promise<{ slice_id: number }> {
    return this.request("POST", "/slices", template);
  }

  deleteSlice(sliceId: number): Promise<unknown> {
    return this.request("DELETE", `/slices/${sliceId}`);
  }

  join(
    sliceId: number,
    participant: string,
    poa: string,
    role = "both",
    accessType?: string,
  ): Promise<unknown> {
    const body: Record<string, unknown> = { participant, poa, role };
    if (accessType) body.access_type = accessType;
    return this.request("POST", `/slices/${sliceId}/participants`, body);
  }

  leave(sliceId: number, participant: string): Promise<unknown> {
    return this.request(
      "DELETE",
      `/slices/${sliceId}/participants/${encodeURIComponent(participant)}`,
    );
  }

  publish(
    sliceId: number,
    participant: string,
    count = 1,
    intervalMs = 0,
  ): Promise<unknown> {
    return this.request("POST", `/slices/${sliceId}/publish`, {
      participant,
      count,
      interval_ms: intervalMs,
    });
  }

  handoff(
    participant: string,
    toPoa: string,
    gapMs?: number,
  ): Promise<HandoffReportView> {
    const body: Record<string, unknown> = { to_poa: toPoa };
    if (gapMs !== undefined) body.gap_ms = gapMs;
    return this.request(
      "POST",
      `/participants/${encodeURIComponent(participant)}/handoff`,
      body,
    );
  }

  move(participant: string, toPoa: string): Promise<unknown> {
    return this.request(
      "POST",
      `/participants/${encodeURIComponent(participant)}/move`,
      { to_poa: toPoa },
    );
  }
}
