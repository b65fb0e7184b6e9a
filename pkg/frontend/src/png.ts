/**
 * Minimal PNG codec for the studio's needs, dependency-free so it runs in
 * both the browser and node tests.
 *
 * - encodeRgbPng: 8-bit RGB, written with stored (uncompressed) deflate
 *   blocks — valid zlib, no compressor required.
 * - decodeIndexedPng: 8-bit indexed-color PNGs as served by the backend
 *   (palette indices are class ids). Decompression is injected: node tests
 *   pass zlib.inflate, the browser passes a DecompressionStream wrapper.
 */

export type InflateFn = (data: Uint8Array) => Promise<Uint8Array>;

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    crc = CRC_TABLE[(crc ^ bytes[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(u32be(data.length));
  out.set(body, 4);
  out.set(u32be(crc32(body)), 4 + body.length);
  return out;
}

/** zlib stream around raw bytes using stored deflate blocks only. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let offset = 0; offset < raw.length || offset === 0; offset += max) {
    const slice = raw.subarray(offset, Math.min(offset + max, raw.length));
    const final = offset + max >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = slice.length & 0xff;
    header[2] = (slice.length >>> 8) & 0xff;
    header[3] = ~slice.length & 0xff;
    header[4] = (~slice.length >>> 8) & 0xff;
    blocks.push(header, slice);
    if (final) break;
  }
  blocks.push(u32be(adler32(raw)));
  const total = blocks.reduce((n, b) => n + b.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const b of blocks) {
    out.set(b, pos);
    pos += b.length;
  }
  return out;
}

/** Encode an 8-bit RGB image (row-major, 3 bytes per pixel). */
export function encodeRgbPng(width: number, height: number, rgb: Uint8Array): Uint8Array {
  if (rgb.length !== width * height * 3) {
    throw new Error(`rgb buffer length ${rgb.length} != ${width}x${height}x3`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width));
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: truecolor
  const stride = width * 3;
  const raw = new Uint8Array(height * (stride + 1));
  for (let row = 0; row < height; row++) {
    raw[row * (stride + 1)] = 0; // filter: none
    raw.set(rgb.subarray(row * stride, (row + 1) * stride), row * (stride + 1) + 1);
  }
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

/** Encode an 8-bit indexed-color PNG whose palette indices are class ids. */
export function encodeIndexedPng(
  width: number,
  height: number,
  indices: Uint8Array | Int16Array,
  palette: [number, number, number][],
): Uint8Array {
  if (indices.length !== width * height) {
    throw new Error(`index buffer length ${indices.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width));
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 3; // color type: indexed
  const plte = new Uint8Array(256 * 3);
  palette.forEach((color, i) => plte.set(color, i * 3));
  const raw = new Uint8Array(height * (width + 1));
  for (let row = 0; row < height; row++) {
    raw[row * (width + 1)] = 0; // filter: none
    for (let x = 0; x < width; x++) {
      const value = indices[row * width + x];
      if (value < 0 || value > 255) throw new Error(`index ${value} outside 0..255`);
      raw[row * (width + 1) + 1 + x] = value;
    }
  }
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("PLTE", plte),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

export interface IndexedImage {
  width: number;
  height: number;
  /** row-major palette indices (class ids) */
  indices: Uint8Array;
  palette: [number, number, number][];
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Decode an 8-bit indexed-color PNG (color type 3). */
export async function decodeIndexedPng(data: Uint8Array, inflate: InflateFn): Promise<IndexedImage> {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (data[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  let pos = 8;
  let width = 0;
  let height = 0;
  const palette: [number, number, number][] = [];
  const idatParts: Uint8Array[] = [];
  while (pos < data.length) {
    const length = view.getUint32(pos);
    const type = new TextDecoder().decode(data.subarray(pos + 4, pos + 8));
    const body = data.subarray(pos + 8, pos + 8 + length);
    if (type === "IHDR") {
      width = view.getUint32(pos + 8);
      height = view.getUint32(pos + 12);
      const bitDepth = body[8];
      const colorType = body[9];
      if (bitDepth !== 8 || colorType !== 3) {
        throw new Error(`expected 8-bit indexed PNG, got depth=${bitDepth} colorType=${colorType}`);
      }
      if (body[12] !== 0) throw new Error("interlaced PNGs are not supported");
    } else if (type === "PLTE") {
      for (let i = 0; i + 2 < body.length; i += 3) {
        palette.push([body[i], body[i + 1], body[i + 2]]);
      }
    } else if (type === "IDAT") {
      idatParts.push(body);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + length;
  }
  if (!width || !height) throw new Error("PNG missing IHDR");
  const compressed = new Uint8Array(idatParts.reduce((n, p) => n + p.length, 0));
  let offset = 0;
  for (const part of idatParts) {
    compressed.set(part, offset);
    offset += part.length;
  }
  const raw = await inflate(compressed);
  const stride = width; // 1 byte per pixel
  if (raw.length !== height * (stride + 1)) {
    throw new Error(`unexpected scanline payload: ${raw.length} bytes`);
  }
  const indices = new Uint8Array(width * height);
  const prev = new Uint8Array(stride);
  const current = new Uint8Array(stride);
  for (let row = 0; row < height; row++) {
    const filter = raw[row * (stride + 1)];
    const line = raw.subarray(row * (stride + 1) + 1, (row + 1) * (stride + 1));
    for (let x = 0; x < stride; x++) {
      const a = x > 0 ? current[x - 1] : 0;
      const b = prev[x];
      const c = x > 0 ? prev[x - 1] : 0;
      let value = line[x];
      if (filter === 1) value += a;
      else if (filter === 2) value += b;
      else if (filter === 3) value += (a + b) >> 1;
      else if (filter === 4) value += paeth(a, b, c);
      else if (filter !== 0) throw new Error(`unsupported PNG filter ${filter}`);
      current[x] = value & 0xff;
    }
    indices.set(current, row * width);
    prev.set(current);
  }
  return { width, height, indices, palette };
}
