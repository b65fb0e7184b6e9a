/**
 * Typed client for the citygen service /v1 API. The browser and node tests
 * share it; fetch and base64 helpers are environment-neutral.
 */
import { decodeIndexedPng, InflateFn } from "./png.js";
import { Grid, JobRecord, Palette } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

function toBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

export class StudioApi {
  constructor(
    readonly baseUrl: string,
    private inflate: InflateFn,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status}`;
      try {
        const detail = (await response.json()).detail;
        if (detail && typeof detail === "object") {
          code = detail.code ?? code;
          message = detail.message ?? message;
        }
      } catch {
        /* body was not JSON */
      }
      throw new ApiError(response.status, code, message);
    }
    return response;
  }

  async getPalette(): Promise<Palette> {
    const response = await this.request("/v1/palette");
    return (await response.json()) as Palette;
  }

  private async submit(path: string, body: unknown): Promise<string> {
    const response = await this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return ((await response.json()) as { job_id: string }).job_id;
  }

  async submitSketch(sketchPng: Uint8Array, seed: number, scale = "S128"): Promise<string> {
    return this.submit("/v1/sketch", { sketch_png_b64: toBase64(sketchPng), seed, scale });
  }

  async submitExpand(
    fieldPng: Uint8Array,
    targetW: number,
    targetH: number,
    overlap: number,
    seed: number,
  ): Promise<string> {
    return this.submit("/v1/expand", {
      field_png_b64: toBase64(fieldPng),
      target_w: targetW,
      target_h: targetH,
      overlap,
      seed,
    });
  }

  async submitRefine(fieldPng: Uint8Array, seed: number): Promise<string> {
    return this.submit("/v1/refine", { field_png_b64: toBase64(fieldPng), seed });
  }

  async getJob(jobId: string): Promise<JobRecord> {
    const response = await this.request(`/v1/jobs/${jobId}`);
    return (await response.json()) as JobRecord;
  }

  async cancelJob(jobId: string): Promise<JobRecord> {
    const response = await this.request(`/v1/jobs/${jobId}`, { method: "DELETE" });
    return (await response.json()) as JobRecord;
  }

  /**
   * Poll until the job reaches a terminal state; reports every observed
   * state transition to `onState` (always monotone server-side).
   */
  async waitForJob(
    jobId: string,
    onState?: (state: JobRecord) => void,
    intervalMs = 50,
    timeoutMs = 600_000,
  ): Promise<JobRecord> {
    const started = Date.now();
    let last = "";
    for (;;) {
      const record = await this.getJob(jobId);
      if (record.state !== last) {
        last = record.state;
        onState?.(record);
      }
      if (record.state === "done") return record;
      if (record.state === "failed") throw new ApiError(500, "job_failed", record.error ?? "job failed");
      if (record.state === "canceled") throw new ApiError(409, "job_canceled", "job was canceled");
      if (Date.now() - started > timeoutMs) throw new ApiError(408, "timeout", `job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  async fetchResultField(jobId: string, index = 0): Promise<Grid> {
    const response = await this.request(`/v1/results/${jobId}?index=${index}`);
    const bytes = new Uint8Array(await response.arrayBuffer());
    const image = await decodeIndexedPng(bytes, this.inflate);
    return {
      width: image.width,
      height: image.height,
      cells: Int16Array.from(image.indices),
    };
  }
}
