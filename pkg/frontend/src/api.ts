/**
 * Typed fetch client for the evodetect service.
 *
 * Service errors arrive as `{"detail": {"code", "message"}}`; ApiError
 * carries both fields so callers can branch on the machine-readable
 * code (e.g. duplicate_verdict) and show the human message verbatim.
 */

import type {
  FeaturesResponse,
  MetricsResponse,
  MissedResponse,
  QueueResponse,
  StatusResponse,
  VerdictResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Thrown when the service cannot be reached at all (network layer). */
export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "ServiceUnreachable";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/v1${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `HTTP ${response.status}`;
      try {
        const payload = (await response.json()) as { detail?: { code?: string; message?: string } };
        if (payload.detail?.code) code = payload.detail.code;
        if (payload.detail?.message) message = payload.detail.message;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  getQueue(params: { status?: "pending" | "verified"; page?: number; pageSize?: number } = {}): Promise<QueueResponse> {
    const q = new URLSearchParams();
    if (params.status !== undefined) q.set("status", params.status);
    if (params.page !== undefined) q.set("page", String(params.page));
    if (params.pageSize !== undefined) q.set("page_size", String(params.pageSize));
    const suffix = q.size > 0 ? `?${q.toString()}` : "";
    return this.request<QueueResponse>("GET", `/queue${suffix}`);
  }

  postVerdict(recordId: string, className: string): Promise<VerdictResponse> {
    return this.request<VerdictResponse>("POST", "/labels", {
      record_id: recordId,
      class_name: className,
    });
  }

  postMissed(recordId: string, className: string): Promise<MissedResponse> {
    return this.request<MissedResponse>("POST", "/missed", {
      record_id: recordId,
      class_name: className,
    });
  }

  getMetrics(params: { start?: number; count?: number } = {}): Promise<MetricsResponse> {
    const q = new URLSearchParams();
    if (params.start !== undefined) q.set("start", String(params.start));
    if (params.count !== undefined) q.set("count", String(params.count));
    const suffix = q.size > 0 ? `?${q.toString()}` : "";
    return this.request<MetricsResponse>("GET", `/metrics${suffix}`);
  }

  getFeatures(topK = 10): Promise<FeaturesResponse> {
    return this.request<FeaturesResponse>("GET", `/features?top_k=${topK}`);
  }

  getStatus(): Promise<StatusResponse> {
    return this.request<StatusResponse>("GET", "/status");
  }
}
