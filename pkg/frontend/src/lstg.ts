/**
 * lstg.ts — reader/writer for the LSTG tensor container.
 *
 * Byte layout (all integers little-endian):
 *
 *     magic   4 bytes  "LSTG"
 *     version u16      currently 1
 *     count   u32      number of entries
 *     entries, each:
 *         name_len u16 | name (UTF-8) | dtype u8 (0=f32, 1=u8) | rank u8 |
 *         dims rank*u64 | offset u64 (absolute file offset of the payload)
 *     payloads, C row-major, little-endian, in entry order.
 *
 * Entry order is preserved, so writing the same mapping twice produces
 * byte-identical files. This mirrors the Python implementation exactly; the
 * parity suite round-trips files between both.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = "LSTG";
const VERSION = 1;

// payloads are raw little-endian words; typed arrays only match on LE hosts
const HOST_LE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;
if (!HOST_LE) {
  throw new Error("lstg: big-endian hosts are not supported");
}

export type Dtype = "f32" | "u8";

/** A named dense array as stored in a container: shape + flat C-order data. */
export interface BoundArray {
  shape: number[];
  dtype: Dtype;
  data: Float32Array | Uint8Array;
}

export class LstgParseError extends Error {}

function elemCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** Build an f32 BoundArray from plain numbers. Rank defaults to 1. */
export function f32(values: ArrayLike<number>, shape?: number[]): BoundArray {
  const data = Float32Array.from(values);
  const s = shape ?? [data.length];
  if (elemCount(s) !== data.length) {
    throw new LstgParseError(`shape [${s}] does not fit ${data.length} values`);
  }
  return { shape: s, dtype: "f32", data };
}

/** Build a u8 BoundArray from plain numbers. Rank defaults to 1. */
export function u8(values: ArrayLike<number>, shape?: number[]): BoundArray {
  const data = Uint8Array.from(values);
  const s = shape ?? [data.length];
  if (elemCount(s) !== data.length) {
    throw new LstgParseError(`shape [${s}] does not fit ${data.length} values`);
  }
  return { shape: s, dtype: "u8", data };
}

/** Flatten an array of [x, y, z]-style rows into an f32 matrix. */
export function f32Rows(rows: number[][]): BoundArray {
  const cols = rows.length > 0 ? rows[0]!.length : 0;
  const flat = new Float32Array(rows.length * cols);
  rows.forEach((row, i) => {
    if (row.length !== cols) {
      throw new LstgParseError("ragged rows");
    }
    flat.set(row, i * cols);
  });
  return { shape: [rows.length, cols], dtype: "f32", data: flat };
}

/** Serialize a name -> array mapping into container bytes. */
export function encode(entries: Record<string, BoundArray>): Buffer {
  const items = Object.entries(entries);
  const names = items.map(([name]) => Buffer.from(name, "utf-8"));

  let tableSize = 0;
  items.forEach(([, arr], i) => {
    tableSize += 2 + names[i]!.length + 1 + 1 + 8 * arr.shape.length + 8;
  });

  const payloadSize = items.reduce((a, [, arr]) => a + arr.data.byteLength, 0);
  const buf = Buffer.alloc(10 + tableSize + payloadSize);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt32LE(items.length, 6);

  let pos = 10;
  let offset = 10 + tableSize;
  for (let i = 0; i < items.length; i++) {
    const [, arr] = items[i]!;
    const name = names[i]!;
    if (elemCount(arr.shape) !== arr.data.length) {
      throw new LstgParseError(
        `entry '${items[i]![0]}': shape [${arr.shape}] does not fit ${arr.data.length} values`,
      );
    }
    buf.writeUInt16LE(name.length, pos);
    pos += 2;
    name.copy(buf, pos);
    pos += name.length;
    buf.writeUInt8(arr.dtype === "f32" ? 0 : 1, pos);
    buf.writeUInt8(arr.shape.length, pos + 1);
    pos += 2;
    for (const dim of arr.shape) {
      buf.writeBigUInt64LE(BigInt(dim), pos);
      pos += 8;
    }
    buf.writeBigUInt64LE(BigInt(offset), pos);
    pos += 8;
    Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength).copy(
      buf,
      offset,
    );
    offset += arr.data.byteLength;
  }
  return buf;
}

/** Parse container bytes into a name -> array map (entry order preserved). */
export function decode(buf: Buffer): Map<string, BoundArray> {
  if (buf.length < 10 || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new LstgParseError("bad magic");
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) {
    throw new LstgParseError(`unsupported version ${version}`);
  }
  const count = buf.readUInt32LE(6);
  const out = new Map<string, BoundArray>();
  let pos = 10;
  for (let i = 0; i < count; i++) {
    if (pos + 2 > buf.length) {
      throw new LstgParseError("truncated entry table");
    }
    const nameLen = buf.readUInt16LE(pos);
    pos += 2;
    const name = buf.toString("utf-8", pos, pos + nameLen);
    pos += nameLen;
    const code = buf.readUInt8(pos);
    const rank = buf.readUInt8(pos + 1);
    pos += 2;
    if (code !== 0 && code !== 1) {
      throw new LstgParseError(`unknown dtype code ${code} for entry '${name}'`);
    }
    const shape: number[] = [];
    for (let d = 0; d < rank; d++) {
      shape.push(Number(buf.readBigUInt64LE(pos)));
      pos += 8;
    }
    const offset = Number(buf.readBigUInt64LE(pos));
    pos += 8;
    const n = elemCount(shape);
    const itemSize = code === 0 ? 4 : 1;
    if (offset + n * itemSize > buf.length) {
      throw new LstgParseError(`entry '${name}' payload out of bounds`);
    }
    // copy out so the view stays valid after the source buffer is reused
    const bytes = Uint8Array.prototype.slice.call(buf, offset, offset + n * itemSize);
    out.set(name, {
      shape,
      dtype: code === 0 ? "f32" : "u8",
      data: code === 0 ? new Float32Array(bytes.buffer) : bytes,
    });
  }
  return out;
}

export function writeFile(path: string, entries: Record<string, BoundArray>): void {
  writeFileSync(path, encode(entries));
}

export function readFile(path: string): Map<string, BoundArray> {
  return decode(readFileSync(path));
}

/** Read one entry, throwing when it is absent. */
export function readEntry(path: string, name: string): BoundArray {
  const entries = readFile(path);
  const entry = entries.get(name);
  if (entry === undefined) {
    throw new LstgParseError(
      `${path}: missing entry '${name}' (has ${[...entries.keys()].join(", ")})`,
    );
  }
  return entry;
}
