/**
 * Minimal 8-bit grayscale PNG codec for deterministic mask export.
 *
 * The encoder writes uncompressed (stored) deflate blocks inside a valid
 * zlib stream, so the output is byte-reproducible with no dependencies and
 * decodes everywhere. The decoder only accepts what this encoder produces
 * (stored blocks, filter 0); anything else is rejected loudly — arbitrary
 * PNGs are decoded by the browser canvas at runtime and by pngjs in tests.
 */

const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

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
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function chunk(type: string, payload: Uint8Array): Uint8Array {
  const typed = new Uint8Array(4 + payload.length);
  for (let i = 0; i < 4; i++) typed[i] = type.charCodeAt(i);
  typed.set(payload, 4);
  const out = new Uint8Array(8 + payload.length + 4);
  out.set(u32be(payload.length), 0);
  out.set(typed, 4);
  out.set(u32be(crc32(typed)), 8 + payload.length);
  return out;
}

/** zlib stream around stored (uncompressed) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const MAX_BLOCK = 65535;
  const blocks = Math.max(1, Math.ceil(raw.length / MAX_BLOCK));
  const out = new Uint8Array(2 + blocks * 5 + raw.length + 4);
  out[0] = 0x78; // 32k window, deflate
  out[1] = 0x01; // no preset dictionary, fastest-compression flag, valid FCHECK
  let pos = 2;
  for (let b = 0; b < blocks; b++) {
    const start = b * MAX_BLOCK;
    const len = Math.min(MAX_BLOCK, raw.length - start);
    out[pos++] = b === blocks - 1 ? 1 : 0; // BFINAL, BTYPE=00
    out[pos++] = len & 0xff;
    out[pos++] = (len >>> 8) & 0xff;
    out[pos++] = ~len & 0xff;
    out[pos++] = (~len >>> 8) & 0xff;
    out.set(raw.subarray(start, start + len), pos);
    pos += len;
  }
  out.set(u32be(adler32(raw)), pos);
  return out;
}

export function encodeGrayPng(width: number, height: number, gray: Uint8Array): Uint8Array {
  if (gray.length !== width * height) {
    throw new Error(`pixel buffer length ${gray.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  // compression, filter, interlace all 0

  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter type none
    raw.set(gray.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }

  const parts = [
    new Uint8Array(PNG_SIGNATURE),
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

function inflateStored(stream: Uint8Array): Uint8Array {
  if (stream.length < 6 || (stream[0] & 0x0f) !== 8) {
    throw new Error("not a zlib stream");
  }
  const chunks: Uint8Array[] = [];
  let pos = 2;
  for (;;) {
    const header = stream[pos];
    if ((header & 0x06) !== 0) {
      throw new Error("only stored deflate blocks are supported");
    }
    const len = stream[pos + 1] | (stream[pos + 2] << 8);
    chunks.push(stream.subarray(pos + 5, pos + 5 + len));
    pos += 5 + len;
    if (header & 1) break;
  }
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const c of chunks) {
    out.set(c, offset);
    offset += c.length;
  }
  if (adler32(out) !== readU32(stream, pos)) {
    throw new Error("zlib checksum mismatch");
  }
  return out;
}

function readU32(bytes: Uint8Array, pos: number): number {
  return (
    ((bytes[pos] << 24) | (bytes[pos + 1] << 16) | (bytes[pos + 2] << 8) | bytes[pos + 3]) >>> 0
  );
}

export interface GrayImage {
  width: number;
  height: number;
  gray: Uint8Array;
}

export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("bad PNG signature");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = readU32(bytes, pos);
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const payload = bytes.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = readU32(payload, 0);
      height = readU32(payload, 4);
      if (payload[8] !== 8 || payload[9] !== 0 || payload[12] !== 0) {
        throw new Error("only 8-bit non-interlaced grayscale is supported");
      }
    } else if (type === "IDAT") {
      idat.push(payload);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  const total = idat.reduce((n, c) => n + c.length, 0);
  const stream = new Uint8Array(total);
  let offset = 0;
  for (const c of idat) {
    stream.set(c, offset);
    offset += c.length;
  }
  const raw = inflateStored(stream);
  const gray = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) {
      throw new Error("only filter type 0 is supported");
    }
    gray.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, gray };
}
