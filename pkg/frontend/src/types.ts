export interface PaletteEntry {
  id: number;
  name: string;
  color: [number, number, number];
}

export type Palette = PaletteEntry[];

/** Cell value meaning "unknown — let the model decide". */
export const SENTINEL = -1;

/** Sketch-file sentinel color understood by the server. */
export const SENTINEL_COLOR: [number, number, number] = [255, 0, 255];

export type JobState = "queued" | "running" | "done" | "failed" | "canceled";

export interface JobRecord {
  job_id: string;
  kind: string;
  state: JobState;
  request_digest: string;
  artifacts: string[];
  error: string | null;
  extra: Record<string, unknown>;
}

export interface Grid {
  width: number;
  height: number;
  /** row-major class ids */
  cells: Int16Array;
}
