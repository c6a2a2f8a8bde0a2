/**
 * Toy dropout-enabled detector.
 *
 * The "network" pools a frame into a grid of mean intensities (the
 * exported feature layer), applies inverted dropout to that feature map
 * when enabled, and scores every cell with a per-class logistic head.
 * Cells whose best class clears the threshold emit one detection whose
 * box is the cell rectangle inset by a score-dependent margin, so
 * dropout perturbs both confidence and localization across passes.
 */

import { readFileSync } from 'node:fs';

import { BBox, Detection, candidateSet } from './geometry.js';
import { PgmImage } from './pgm.js';
import { CounterRng } from './prng.js';

export interface ModelSpec {
  name: string;
  grid: number;
  classes: number;
  dropout_rate: number;
  threshold: number;
  /** one (weight, bias) pair per class applied to each cell feature */
  weights: number[];
  biases: number[];
}

export function loadModelSpec(path: string): ModelSpec {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new Error(`model load failure: ${path}: ${(err as Error).message}`);
  }
  const spec = raw as ModelSpec;
  if (!spec || typeof spec !== 'object') throw new Error(`model load failure: ${path}`);
  if (!Number.isInteger(spec.grid) || spec.grid < 1) {
    throw new Error(`model load failure: grid must be a positive integer`);
  }
  if (!Number.isInteger(spec.classes) || spec.classes < 1) {
    throw new Error(`model load failure: classes must be a positive integer`);
  }
  if (!(spec.dropout_rate >= 0 && spec.dropout_rate < 1)) {
    throw new Error(`model load failure: dropout_rate must lie in [0, 1)`);
  }
  if (!(spec.threshold > 0 && spec.threshold < 1)) {
    throw new Error(`model load failure: threshold must lie in (0, 1)`);
  }
  if (!Array.isArray(spec.weights) || spec.weights.length !== spec.classes) {
    throw new Error(`model load failure: weights must list one value per class`);
  }
  if (!Array.isArray(spec.biases) || spec.biases.length !== spec.classes) {
    throw new Error(`model load failure: biases must list one value per class`);
  }
  return spec;
}

function logistic(z: number): number {
  return z >= 0 ? 1 / (1 + Math.exp(-z)) : Math.exp(z) / (1 + Math.exp(z));
}

/** Grid-pooled mean intensities in [0, 1]; the exported feature vector. */
export function extractFeatures(image: PgmImage, grid: number): Float32Array {
  const features = new Float32Array(grid * grid);
  const cellW = image.width / grid;
  const cellH = image.height / grid;
  for (let r = 0; r < grid; r++) {
    const y0 = Math.floor(r * cellH);
    const y1 = r === grid - 1 ? image.height : Math.floor((r + 1) * cellH);
    for (let c = 0; c < grid; c++) {
      const x0 = Math.floor(c * cellW);
      const x1 = c === grid - 1 ? image.width : Math.floor((c + 1) * cellW);
      let sum = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) sum += image.pixels[y * image.width + x];
      }
      const count = Math.max(1, (y1 - y0) * (x1 - x0));
      features[r * grid + c] = sum / count / image.maxval;
    }
  }
  return features;
}

/** Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate). */
export function dropoutMask(size: number, rate: number, rng: CounterRng): Float32Array {
  const mask = new Float32Array(size);
  const keepScale = 1 / (1 - rate);
  for (let i = 0; i < size; i++) {
    mask[i] = rng.bernoulli(rate) ? 0 : keepScale;
  }
  return mask;
}

/** Inset fraction of the cell rectangle: higher score, bigger box. */
export const INSET_BASE = 0.45;
export const INSET_SLOPE = 0.35;
/** Secondary anchor: shifted box scored with a dampened logit. */
export const ANCHOR_SHIFT = 0.1; // fraction of the cell size
export const ANCHOR_LOGIT_DROP = 0.6;

export function cellBox(
  cell: number,
  anchor: number,
  grid: number,
  width: number,
  height: number,
  score: number,
): BBox {
  const cellW = width / grid;
  const cellH = height / grid;
  const row = Math.floor(cell / grid);
  const col = cell % grid;
  const rho = INSET_BASE - INSET_SLOPE * score;
  const dx = anchor * ANCHOR_SHIFT * cellW;
  const dy = anchor * ANCHOR_SHIFT * cellH;
  return [
    col * cellW + rho * cellW + dx,
    row * cellH + rho * cellH + dy,
    (col + 1) * cellW - rho * cellW + dx,
    (row + 1) * cellH - rho * cellH + dy,
  ];
}

export interface ForwardResult {
  detections: Detection[];
  /** per-detection bookkeeping for the gradient computation */
  cellFeatures: number[];
  logits: number[];
  cells: number[];
  anchors: number[];
}

export function forward(
  spec: ModelSpec,
  image: PgmImage,
  features: Float32Array,
  mask: Float32Array | null,
): ForwardResult {
  const result: ForwardResult = {
    detections: [],
    cellFeatures: [],
    logits: [],
    cells: [],
    anchors: [],
  };
  for (let i = 0; i < features.length; i++) {
    const f = mask ? features[i] * mask[i] : features[i];
    let bestClass = -1;
    let bestScore = -1;
    let bestZ = 0;
    for (let c = 0; c < spec.classes; c++) {
      const z = spec.weights[c] * f + spec.biases[c];
      const s = logistic(z);
      if (s > bestScore) {
        bestScore = s;
        bestClass = c;
        bestZ = z;
      }
    }
    for (const [anchor, z] of [[0, bestZ], [1, bestZ - ANCHOR_LOGIT_DROP]] as const) {
      const s = anchor === 0 ? bestScore : logistic(z);
      if (s >= spec.threshold) {
        result.detections.push({
          bbox: cellBox(i, anchor, spec.grid, image.width, image.height, s),
          class_id: bestClass,
          score: s,
        });
        result.cellFeatures.push(f);
        result.logits.push(z);
        result.cells.push(i);
        result.anchors.push(anchor);
      }
    }
  }
  return result;
}

function smoothL1Grad(d: number): number {
  if (d > 1) return 1;
  if (d < -1) return -1;
  return d;
}

const SCORE_EPS = 1e-7;

/**
 * Per-detection grad-loss scalars: L2 norms of the summed localization-
 * and classification-term gradients of the toy loss with candidates as
 * pseudo-labels, taken with respect to the head parameters (w, b).
 */
export function gradLoss(
  spec: ModelSpec,
  image: PgmImage,
  result: ForwardResult,
): Array<{ loc: number; cls: number }> {
  const { detections, cellFeatures } = result;
  const cellW = image.width / spec.grid;
  const cellH = image.height / spec.grid;
  return detections.map((det, j) => {
    const candidates = candidateSet(detections, j);
    if (candidates.length === 0) return { loc: 0, cls: 0 };
    const s = Math.min(Math.max(det.score, SCORE_EPS), 1 - SCORE_EPS);
    const f = cellFeatures[j];
    const sPrime = s * (1 - s); // d score / d logit
    // corners move with the logit through the inset (d rho/d s = -slope):
    // x1/y1 shrink as the score grows, x2/y2 grow
    const gx = cellW * INSET_SLOPE * sPrime;
    const gy = cellH * INSET_SLOPE * sPrime;
    const dBox = [-gx, -gy, gx, gy];
    let dzLoc = 0;
    let dzCls = 0;
    for (const k of candidates) {
      const other = detections[k];
      for (let p = 0; p < 4; p++) {
        dzLoc += smoothL1Grad(det.bbox[p] - other.bbox[p]) * dBox[p];
      }
      dzCls += s - other.score; // cross-entropy against the candidate's score
    }
    // gradient w.r.t. (w, b) is dz * (f, 1)
    const scale = Math.sqrt(f * f + 1);
    return { loc: Math.abs(dzLoc) * scale, cls: Math.abs(dzCls) * scale };
  });
}
