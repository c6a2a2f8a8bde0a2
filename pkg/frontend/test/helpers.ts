import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

export function writePgm(
  path: string,
  width: number,
  height: number,
  valueAt: (x: number, y: number) => number,
): void {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, 'ascii');
  const pixels = Buffer.alloc(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      pixels[y * width + x] = valueAt(x, y) & 0xff;
    }
  }
  writeFileSync(path, Buffer.concat([header, pixels]));
}

/** Bright square on a dark field; the toy detector fires on bright cells. */
export function blobFrame(path: string, size = 32): void {
  writePgm(path, size, size, (x, y) =>
    x >= size / 4 && x < size / 2 && y >= size / 4 && y < size / 2 ? 220 : 10,
  );
}

export interface SpecOverrides {
  grid?: number;
  classes?: number;
  dropout_rate?: number;
  threshold?: number;
  weights?: number[];
  biases?: number[];
}

export function writeModelSpec(path: string, overrides: SpecOverrides = {}): void {
  const spec = {
    name: 'toy-grid-v1',
    grid: 4,
    classes: 1,
    dropout_rate: 0.3,
    threshold: 0.5,
    weights: [6.0],
    biases: [-2.0],
    ...overrides,
  };
  writeFileSync(path, JSON.stringify(spec, null, 2) + '\n');
}
