/**
 * Readers/writers for the panomesh binary containers.
 *
 * Every file is little-endian: 4-byte magic, u32 version, then a
 * format-specific header and a raw payload. Payloads are copied into typed
 * arrays directly (LE host assumed, which covers every platform Node ships
 * release binaries for).
 */

import { readFileSync, writeFileSync } from "node:fs";

const VERSION = 1;

export function faceCount(mr: number): number {
  return 20 * 4 ** mr;
}

export function vertexCount(mr: number): number {
  return 10 * 4 ** mr + 2;
}

/** Smallest refinement whose face count matches, or throw. */
export function mrFromFaceCount(n: number): number {
  for (let mr = 0; mr <= 16; mr++) {
    if (faceCount(mr) === n) return mr;
  }
  throw new Error(`${n} is not 20*4^mr for any mr <= 16`);
}

export interface ImageArray {
  data: Float32Array;
  height: number;
  width: number;
}

function checkHeader(buf: Buffer, magic: string): void {
  if (buf.length < 8 || buf.toString("latin1", 0, 4) !== magic) {
    throw new Error(`bad magic, expected ${magic}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported ${magic} version ${version}`);
  }
}

function copyOut<T extends Float32Array | Float64Array | Uint32Array | Int32Array>(
  out: T,
  buf: Buffer,
  offset: number,
): T {
  const bytes = out.byteLength;
  if (offset + bytes > buf.length) {
    throw new Error(`truncated file: wanted ${offset + bytes} bytes, got ${buf.length}`);
  }
  Buffer.from(out.buffer).set(buf.subarray(offset, offset + bytes));
  return out;
}

// -- SFDM: single-channel float32 equirect image --------------------------

export function writeSfdm(path: string, image: ImageArray): void {
  const { data, height, width } = image;
  if (data.length !== height * width) {
    throw new Error(`data length ${data.length} != ${height}x${width}`);
  }
  const header = Buffer.alloc(16);
  header.write("SFDM", 0, "latin1");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(height, 8);
  header.writeUInt32LE(width, 12);
  writeFileSync(path, Buffer.concat([header, Buffer.from(data.buffer, data.byteOffset, data.byteLength)]));
}

export function readSfdm(path: string): ImageArray {
  const buf = readFileSync(path);
  checkHeader(buf, "SFDM");
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const data = copyOut(new Float32Array(height * width), buf, 16);
  return { data, height, width };
}

// -- SFMF: per-face float32 features ---------------------------------------

export interface FaceArray {
  mr: number;
  channels: number;
  data: Float32Array;
}

export function writeSfmf(path: string, mr: number, data: Float32Array, channels = 1): void {
  if (data.length !== faceCount(mr) * channels) {
    throw new Error(`data length ${data.length} != ${faceCount(mr)}x${channels} for mr=${mr}`);
  }
  const header = Buffer.alloc(16);
  header.write("SFMF", 0, "latin1");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(mr, 8);
  header.writeUInt32LE(channels, 12);
  writeFileSync(path, Buffer.concat([header, Buffer.from(data.buffer, data.byteOffset, data.byteLength)]));
}

export function readSfmf(path: string): FaceArray {
  const buf = readFileSync(path);
  checkHeader(buf, "SFMF");
  const mr = buf.readUInt32LE(8);
  const channels = buf.readUInt32LE(12);
  const data = copyOut(new Float32Array(faceCount(mr) * channels), buf, 16);
  return { mr, channels, data };
}

// -- SFMH: mesh geometry + adjacency ---------------------------------------

export interface MeshArrays {
  mr: number;
  vertices: Float64Array; // (V, 3) row-major
  faces: Uint32Array; // (F, 3)
  centers: Float64Array; // (F, 3)
  faf: Int32Array; // (F, 3)
}

export function readSfmh(path: string): MeshArrays {
  const buf = readFileSync(path);
  checkHeader(buf, "SFMH");
  const mr = buf.readUInt32LE(8);
  const nv = buf.readUInt32LE(12);
  const nf = buf.readUInt32LE(16);
  let offset = 20;
  const vertices = copyOut(new Float64Array(nv * 3), buf, offset);
  offset += vertices.byteLength;
  const faces = copyOut(new Uint32Array(nf * 3), buf, offset);
  offset += faces.byteLength;
  const centers = copyOut(new Float64Array(nf * 3), buf, offset);
  offset += centers.byteLength;
  const faf = copyOut(new Int32Array(nf * 3), buf, offset);
  return { mr, vertices, faces, centers, faf };
}
