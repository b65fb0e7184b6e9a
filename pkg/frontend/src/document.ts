/**
 * The editable sketch document: a pixel grid of class ids or the unknown
 * sentinel, with snapshot-based undo/redo. All edits are pure grid
 * operations so the model is testable without a DOM.
 */
import { Grid, Palette, SENTINEL, SENTINEL_COLOR } from "./types.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export class CanvasDocument {
  readonly width: number;
  readonly height: number;
  readonly palette: Palette;
  private cells: Int16Array;
  private undoStack: Int16Array[] = [];
  private redoStack: Int16Array[] = [];
  /** job ids this document spawned (sketch/expand/refine submissions) */
  readonly linkedJobs: string[] = [];

  constructor(width: number, height: number, palette: Palette, initial?: Int16Array) {
    if (palette.length < 2) throw new Error("palette needs at least 2 classes");
    this.width = width;
    this.height = height;
    this.palette = palette;
    this.cells = initial ? Int16Array.from(initial) : new Int16Array(width * height).fill(SENTINEL);
    if (this.cells.length !== width * height) {
      throw new Error(`grid length ${this.cells.length} != ${width}x${height}`);
    }
  }

  static fromGrid(grid: Grid, palette: Palette): CanvasDocument {
    return new CanvasDocument(grid.width, grid.height, palette, grid.cells);
  }

  get(x: number, y: number): number {
    return this.cells[y * this.width + x];
  }

  snapshotCells(): Int16Array {
    return Int16Array.from(this.cells);
  }

  /** Count of non-sentinel (hard-constraint) pixels. */
  knownCount(): number {
    let n = 0;
    for (const v of this.cells) if (v !== SENTINEL) n++;
    return n;
  }

  sentinelCount(): number {
    return this.cells.length - this.knownCount();
  }

  /** Submittable = something drawn and something left for the model. */
  canSubmit(): boolean {
    const known = this.knownCount();
    return known > 0 && known < this.cells.length;
  }

  private pushUndo(): void {
    this.undoStack.push(Int16Array.from(this.cells));
    this.redoStack.length = 0;
  }

  /**
   * Paint every pixel within `radius` (Euclidean) of the polyline through
   * `path` with a class id or the sentinel. Strokes outside the canvas are
   * clipped. One stroke = one undo step.
   */
  brushPaint(value: number, path: StrokePoint[], radius: number): void {
    if (value !== SENTINEL && (value < 0 || value >= this.palette.length)) {
      throw new Error(`class ${value} outside palette`);
    }
    if (path.length === 0) return;
    this.pushUndo();
    const stamp = (cx: number, cy: number) => {
      const r = Math.max(0, radius);
      const x0 = Math.max(0, Math.floor(cx - r));
      const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
      const y0 = Math.max(0, Math.floor(cy - r));
      const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
      for (let y = y0; y <= y1; y++) {
        for (let x = x0; x <= x1; x++) {
          const dx = x - cx;
          const dy = y - cy;
          if (dx * dx + dy * dy <= r * r) {
            this.cells[y * this.width + x] = value;
          }
        }
      }
    };
    stamp(path[0].x, path[0].y);
    for (let i = 1; i < path.length; i++) {
      const from = path[i - 1];
      const to = path[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(to.x - from.x, to.y - from.y) * 2));
      for (let s = 1; s <= steps; s++) {
        stamp(from.x + ((to.x - from.x) * s) / steps, from.y + ((to.y - from.y) * s) / steps);
      }
    }
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.cells);
    this.cells = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.cells);
    this.cells = next;
    return true;
  }

  /** Replace the base with a completed result; clears the sentinel. Undoable. */
  adoptResult(result: Grid): void {
    if (result.width !== this.width || result.height !== this.height) {
      throw new Error("result size does not match document");
    }
    this.pushUndo();
    this.cells = Int16Array.from(result.cells);
  }

  /** Pixels the server must preserve: every non-sentinel cell. */
  preservedMask(): Uint8Array {
    const mask = new Uint8Array(this.cells.length);
    for (let i = 0; i < this.cells.length; i++) mask[i] = this.cells[i] === SENTINEL ? 0 : 1;
    return mask;
  }

  /** RGB bytes of the sketch: palette colors for known cells, sentinel color
   * for unknown ones — exactly the documented sketch file format. */
  toSketchRgb(): Uint8Array {
    const rgb = new Uint8Array(this.cells.length * 3);
    for (let i = 0; i < this.cells.length; i++) {
      const value = this.cells[i];
      const color = value === SENTINEL ? SENTINEL_COLOR : this.palette[value].color;
      rgb[i * 3] = color[0];
      rgb[i * 3 + 1] = color[1];
      rgb[i * 3 + 2] = color[2];
    }
    return rgb;
  }

  /**
   * Compare a completed result against the sketch: count of constrained
   * pixels the result kept. The client-side half of the preservation
   * cross-check with the server's reported count.
   */
  preservedPixelsIn(result: Grid): number {
    if (result.width !== this.width || result.height !== this.height) {
      throw new Error("result size does not match document");
    }
    let kept = 0;
    for (let i = 0; i < this.cells.length; i++) {
      if (this.cells[i] !== SENTINEL && result.cells[i] === this.cells[i]) kept++;
    }
    return kept;
  }
}
