/**
 * Browser shell: palette brushes, sentinel eraser, zoomed pixel editing,
 * result layering with a preserved-pixel overlay, and expand/refine panels.
 * All state lives in CanvasDocument/Studio; this file only renders and wires
 * DOM events.
 */
import { StudioApi } from "./api.js";
import { CanvasDocument, StrokePoint } from "./document.js";
import { Studio } from "./studio.js";
import { Grid, SENTINEL, SENTINEL_COLOR } from "./types.js";

const ZOOM = 4;

async function browserInflate(data: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart])
    .stream()
    .pipeThrough(new DecompressionStream("deflate"));
  return new Uint8Array(await new Response(stream).arrayBuffer());
}

const api = new StudioApi(
  (window as unknown as { CITYGEN_URL?: string }).CITYGEN_URL ?? "http://127.0.0.1:8080",
  browserInflate,
);
const studio = new Studio(api);

const root = document.getElementById("app") ?? document.body;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  parent: HTMLElement,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text) node.textContent = text;
  parent.append(node);
  return node;
}

async function boot() {
  let doc = await studio.newDocument(128);
  let resultLayer: Grid | null = null;
  let brushValue = 0;
  let brushRadius = 2;
  let stroke: StrokePoint[] | null = null;

  const toolbar = el("div", root);
  toolbar.className = "toolbar";
  const status = el("span", toolbar, "ready");

  const canvas = el("canvas", root);
  canvas.width = doc.width * ZOOM;
  canvas.height = doc.height * ZOOM;
  const ctx = canvas.getContext("2d")!;

  const buttons: HTMLButtonElement[] = [];
  for (const entry of doc.palette) {
    const button = el("button", toolbar, entry.name);
    button.style.background = `rgb(${entry.color.join(",")})`;
    button.onclick = () => {
      brushValue = entry.id;
    };
    buttons.push(button);
  }
  const eraser = el("button", toolbar, "unknown");
  eraser.style.background = `rgb(${SENTINEL_COLOR.join(",")})`;
  eraser.onclick = () => {
    brushValue = SENTINEL;
  };

  const radiusInput = el("input", toolbar);
  radiusInput.type = "range";
  radiusInput.min = "0";
  radiusInput.max = "8";
  radiusInput.value = String(brushRadius);
  radiusInput.oninput = () => {
    brushRadius = Number(radiusInput.value);
  };

  const undoButton = el("button", toolbar, "undo");
  const redoButton = el("button", toolbar, "redo");
  const submitButton = el("button", toolbar, "complete sketch");
  const adoptButton = el("button", toolbar, "adopt result");
  const expandButton = el("button", toolbar, "expand 2x");
  const refineButton = el("button", toolbar, "refine");
  const seedInput = el("input", toolbar);
  seedInput.type = "number";
  seedInput.value = "0";

  function cellColor(value: number): string {
    if (value === SENTINEL) return `rgb(${SENTINEL_COLOR.join(",")})`;
    return `rgb(${doc.palette[value].color.join(",")})`;
  }

  function redraw() {
    for (let y = 0; y < doc.height; y++) {
      for (let x = 0; x < doc.width; x++) {
        ctx.fillStyle = cellColor(doc.get(x, y));
        ctx.fillRect(x * ZOOM, y * ZOOM, ZOOM, ZOOM);
      }
    }
    if (resultLayer) {
      // result on the right half of each cell; preserved pixels outlined
      for (let y = 0; y < doc.height; y++) {
        for (let x = 0; x < doc.width; x++) {
          const value = resultLayer.cells[y * doc.width + x];
          ctx.fillStyle = cellColor(value);
          ctx.globalAlpha = 0.6;
          ctx.fillRect(x * ZOOM, y * ZOOM, ZOOM, ZOOM);
          ctx.globalAlpha = 1.0;
          if (doc.get(x, y) !== SENTINEL) {
            ctx.strokeStyle = "white";
            ctx.strokeRect(x * ZOOM + 0.5, y * ZOOM + 0.5, ZOOM - 1, ZOOM - 1);
          }
        }
      }
    }
    submitButton.disabled = !doc.canSubmit();
    adoptButton.disabled = resultLayer === null;
    const adopted = doc.sentinelCount() === 0;
    expandButton.disabled = !adopted;
    refineButton.disabled = !adopted;
  }

  function canvasPoint(event: MouseEvent): StrokePoint {
    const rect = canvas.getBoundingClientRect();
    return {
      x: (event.clientX - rect.left) / ZOOM,
      y: (event.clientY - rect.top) / ZOOM,
    };
  }

  canvas.onmousedown = (event) => {
    stroke = [canvasPoint(event)];
  };
  canvas.onmousemove = (event) => {
    if (stroke) stroke.push(canvasPoint(event));
  };
  window.onmouseup = () => {
    if (stroke) {
      doc.brushPaint(brushValue, stroke, brushRadius);
      stroke = null;
      redraw();
    }
  };

  undoButton.onclick = () => {
    doc.undo();
    redraw();
  };
  redoButton.onclick = () => {
    doc.redo();
    redraw();
  };

  submitButton.onclick = async () => {
    status.textContent = "completing sketch...";
    submitButton.disabled = true;
    try {
      const outcome = await studio.submitSketch(doc, Number(seedInput.value));
      resultLayer = outcome.result;
      status.textContent =
        `done: ${outcome.preservedClient}/${outcome.preservedServer} preserved ` +
        `(client/server${outcome.preservedClient === outcome.preservedServer ? " agree" : " MISMATCH"})`;
    } catch (error) {
      status.textContent = `error: ${(error as Error).message}`;
    }
    redraw();
  };

  adoptButton.onclick = () => {
    if (resultLayer) {
      doc.adoptResult(resultLayer);
      resultLayer = null;
      redraw();
    }
  };

  expandButton.onclick = async () => {
    status.textContent = "expanding...";
    try {
      doc = await studio.expandDocument(doc, doc.width * 2, doc.height * 2, Number(seedInput.value));
      resultLayer = null;
      canvas.width = doc.width * ZOOM;
      canvas.height = doc.height * ZOOM;
      status.textContent = `opened ${doc.width}x${doc.height} document`;
    } catch (error) {
      status.textContent = `error: ${(error as Error).message}`;
    }
    redraw();
  };

  refineButton.onclick = async () => {
    status.textContent = "refining...";
    try {
      doc = await studio.refineDocument(doc, Number(seedInput.value));
      resultLayer = null;
      canvas.width = doc.width * ZOOM;
      canvas.height = doc.height * ZOOM;
      status.textContent = `opened refined ${doc.width}x${doc.height} document`;
    } catch (error) {
      status.textContent = `error: ${(error as Error).message}`;
    }
    redraw();
  };

  redraw();
}

boot().catch((error) => {
  el("pre", root, `failed to reach the citygen service: ${error.message}`);
});
