/** Binary PGM (P5) reading for 8-bit frames. */

import { readFileSync } from 'node:fs';

export interface PgmImage {
  width: number;
  height: number;
  maxval: number;
  pixels: Uint8Array; // row-major
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

export function readPgm(path: string): PgmImage {
  const data = readFileSync(path);
  if (data.length < 2 || data[0] !== 0x50 || data[1] !== 0x35) {
    throw new Error(`${path}: not a binary PGM (missing P5 magic)`);
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < data.length && WHITESPACE.has(data[pos])) pos += 1;
    if (data[pos] === 0x23) {
      // comment line
      while (pos < data.length && data[pos] !== 0x0a) pos += 1;
      continue;
    }
    const start = pos;
    while (pos < data.length && !WHITESPACE.has(data[pos])) pos += 1;
    if (start === pos) throw new Error(`${path}: truncated PGM header`);
    const token = data.subarray(start, pos).toString('ascii');
    const value = Number.parseInt(token, 10);
    if (!Number.isFinite(value)) throw new Error(`${path}: bad header token '${token}'`);
    fields.push(value);
  }
  pos += 1; // single whitespace byte after maxval
  const [width, height, maxval] = fields;
  if (maxval < 1 || maxval > 255) {
    throw new Error(`${path}: unsupported maxval ${maxval} (need 8-bit PGM)`);
  }
  const expected = width * height;
  const pixels = data.subarray(pos, pos + expected);
  if (pixels.length !== expected) {
    throw new Error(`${path}: truncated payload at byte ${pos + pixels.length}`);
  }
  return { width, height, maxval, pixels: new Uint8Array(pixels) };
}
