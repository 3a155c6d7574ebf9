// Thin fetch client for the monitor service. All model-state mutation goes
// through POST /labels and POST /update, each carrying a client-supplied
// idempotency token so a retry can never trigger a second update.

import type {
  ClustersResponse,
  LabelAssignmentBody,
  LabelsResponse,
  SampleDetail,
  StateInfo,
  UpdateResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

type FetchLike = typeof fetch;

export class MonitorApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`, null);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : `HTTP ${response.status}`;
      throw new ApiError(detail, response.status);
    }
    return body as T;
  }

  getState(): Promise<StateInfo> {
    return this.request<StateInfo>("/state");
  }

  getClusters(refresh = false): Promise<ClustersResponse> {
    const query = refresh ? "?refresh=true" : "";
    return this.request<ClustersResponse>(`/clusters${query}`);
  }

  getSample(sampleId: string): Promise<SampleDetail> {
    return this.request<SampleDetail>(`/samples/${encodeURIComponent(sampleId)}`);
  }

  submitLabels(
    assignments: LabelAssignmentBody[],
    token: string,
    expectedRevision: number | null,
  ): Promise<LabelsResponse> {
    return this.request<LabelsResponse>("/labels", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        request_token: token,
        expected_revision: expectedRevision,
        assignments,
        update: true,
      }),
    });
  }

  triggerUpdate(token: string): Promise<UpdateResponse> {
    return this.request<UpdateResponse>("/update", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ request_token: token }),
    });
  }
}
