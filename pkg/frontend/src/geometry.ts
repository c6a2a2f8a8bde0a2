/** Box overlap and candidate sets, mirroring the toolkit's defaults. */

export type BBox = [number, number, number, number]; // x1, y1, x2, y2

export const IOU_EPS = 0.5;
export const SCORE_DELTA = 0.05;

export function iou(a: BBox, b: BBox): number {
  const ix = Math.min(a[2], b[2]) - Math.max(a[0], b[0]);
  const iy = Math.min(a[3], b[3]) - Math.max(a[1], b[1]);
  if (ix <= 0 || iy <= 0) return 0;
  const inter = ix * iy;
  const areaA = (a[2] - a[0]) * (a[3] - a[1]);
  const areaB = (b[2] - b[0]) * (b[3] - b[1]);
  return inter / (areaA + areaB - inter);
}

export interface Detection {
  bbox: BBox;
  class_id: number;
  score: number;
}

/**
 * Indices k != j sharing j's class with IoU >= eps and score >= delta —
 * the same candidate rule the evaluation side applies.
 */
export function candidateSet(
  dets: Detection[],
  j: number,
  eps: number = IOU_EPS,
  delta: number = SCORE_DELTA,
): number[] {
  const out: number[] = [];
  for (let k = 0; k < dets.length; k++) {
    if (k === j) continue;
    if (dets[k].class_id !== dets[j].class_id) continue;
    if (dets[k].score < delta) continue;
    if (iou(dets[k].bbox, dets[j].bbox) >= eps) out.push(k);
  }
  return out;
}
