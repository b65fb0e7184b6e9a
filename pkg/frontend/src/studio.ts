/**
 * Orchestration glue between documents and the service: submit a sketch and
 * cross-check preservation, expand or refine an adopted document, and open
 * results as new documents. Framework-free so the flows are testable
 * headless.
 */
import { StudioApi } from "./api.js";
import { CanvasDocument } from "./document.js";
import { encodeIndexedPng, encodeRgbPng } from "./png.js";
import { Grid, Palette } from "./types.js";

export interface SketchOutcome {
  jobId: string;
  result: Grid;
  /** preservation count reported by the server */
  preservedServer: number;
  /** preservation count recomputed client-side from the result */
  preservedClient: number;
  states: string[];
}

function colorsEqual(a: Palette, b: Palette): boolean {
  return (
    a.length === b.length &&
    a.every(
      (entry, i) =>
        entry.id === b[i].id &&
        entry.color[0] === b[i].color[0] &&
        entry.color[1] === b[i].color[1] &&
        entry.color[2] === b[i].color[2],
    )
  );
}

export class Studio {
  constructor(readonly api: StudioApi) {}

  /** New empty document at a model-native side, bound to the server palette. */
  async newDocument(side = 128): Promise<CanvasDocument> {
    const palette = await this.api.getPalette();
    return new CanvasDocument(side, side, palette);
  }

  /** The client palette must mirror the server's exactly (bit-faithful colors). */
  async verifyPaletteParity(doc: CanvasDocument): Promise<boolean> {
    return colorsEqual(doc.palette, await this.api.getPalette());
  }

  async submitSketch(doc: CanvasDocument, seed: number): Promise<SketchOutcome> {
    if (!doc.canSubmit()) {
      throw new Error("document needs at least one known and one unknown pixel");
    }
    const png = encodeRgbPng(doc.width, doc.height, doc.toSketchRgb());
    const jobId = await this.api.submitSketch(png, seed);
    doc.linkedJobs.push(jobId);
    const states: string[] = [];
    const record = await this.api.waitForJob(jobId, (r) => states.push(r.state));
    const result = await this.api.fetchResultField(jobId);
    return {
      jobId,
      result,
      preservedServer: Number(record.extra["preserved_pixels"] ?? NaN),
      preservedClient: doc.preservedPixelsIn(result),
      states,
    };
  }

  /** Expand an adopted (sentinel-free) document; returns the larger document. */
  async expandDocument(
    doc: CanvasDocument,
    targetW: number,
    targetH: number,
    seed: number,
    overlap = 0.5,
  ): Promise<CanvasDocument> {
    if (doc.sentinelCount() > 0) {
      throw new Error("adopt a completed result before expanding");
    }
    const colors = doc.palette.map((entry) => entry.color);
    const png = encodeIndexedPng(doc.width, doc.height, doc.snapshotCells(), colors);
    const jobId = await this.api.submitExpand(png, targetW, targetH, overlap, seed);
    doc.linkedJobs.push(jobId);
    await this.api.waitForJob(jobId);
    const result = await this.api.fetchResultField(jobId);
    return CanvasDocument.fromGrid(result, doc.palette);
  }

  /** Refine an adopted document through the multi-scale cascade. */
  async refineDocument(doc: CanvasDocument, seed: number): Promise<CanvasDocument> {
    if (doc.sentinelCount() > 0) {
      throw new Error("adopt a completed result before refining");
    }
    const colors = doc.palette.map((entry) => entry.color);
    const png = encodeIndexedPng(doc.width, doc.height, doc.snapshotCells(), colors);
    const jobId = await this.api.submitRefine(png, seed);
    doc.linkedJobs.push(jobId);
    await this.api.waitForJob(jobId);
    const result = await this.api.fetchResultField(jobId);
    return CanvasDocument.fromGrid(result, doc.palette);
  }
}
