// Client for the synthesis service's JSON API (POST /v1/synthesize).
// `fetch` is injectable so contract tests can mock the service.

export interface SynthesizeResponse {
  photo: string; // base64 PNG
  refined?: string; // base64 PNG, present when return_intermediate was set
  width: number;
  height: number;
  timings?: Record<string, number>;
}

export interface HealthResponse {
  status: string;
  checkpoints?: Record<string, string>;
  versions?: Record<string, string>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

export class SynthesisClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async synthesize(sketchPngBase64: string, returnIntermediate = true): Promise<SynthesizeResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/v1/synthesize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        sketch: sketchPngBase64,
        return_intermediate: returnIntermediate,
      }),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    const body = (await res.json()) as SynthesizeResponse;
    if (typeof body.photo !== "string" || typeof body.width !== "number") {
      throw new ApiError(502, "malformed response body");
    }
    return body;
  }

  async health(): Promise<HealthResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/healthz`);
    if (!res.ok) throw new ApiError(res.status, res.statusText);
    return (await res.json()) as HealthResponse;
  }
}
