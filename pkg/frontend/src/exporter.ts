/**
 * Export pipeline: run the dropout-enabled toy detector N times per
 * frame and write toolkit-format files (detections JSONL, FVEC feature
 * vectors, optional grad-loss JSONL). Every written file is
 * self-validated against the schema before the export is declared done.
 */

import { readdirSync } from 'node:fs';
import { basename, join } from 'node:path';

import { dropoutMask, extractFeatures, forward, gradLoss, loadModelSpec } from './detector.js';
import { CounterRng } from './prng.js';
import {
  DetectionRecord,
  GradLossRecord,
  validateDetectionsFile,
  validateFeaturesFile,
  validateGradLossFile,
  writeDetections,
  writeFeatures,
  writeGradLoss,
} from './formats.js';
import { readPgm } from './pgm.js';

export interface ExportConfig {
  modelPath: string;
  framesDir: string;
  outDir: string;
  passes: number;
  dropout: boolean;
  gradLoss: boolean;
  seed: number;
  domainId: string;
}

export interface ExportSummary {
  frames: number;
  passes: number;
  detectionLines: number;
  detections: number;
  files: string[];
}

export function listFrames(framesDir: string): string[] {
  const frames = readdirSync(framesDir)
    .filter((name) => name.toLowerCase().endsWith('.pgm'))
    .sort();
  if (frames.length === 0) throw new Error(`no .pgm frames under ${framesDir}`);
  return frames.map((name) => join(framesDir, name));
}

export function runExport(cfg: ExportConfig): ExportSummary {
  if (cfg.passes < 1) throw new Error('passes must be >= 1');
  if (cfg.dropout && cfg.passes < 2) {
    throw new Error('dropout-enabled export needs passes >= 2');
  }
  const spec = loadModelSpec(cfg.modelPath);
  const framePaths = listFrames(cfg.framesDir);

  const records: DetectionRecord[] = [];
  const gradRecords: GradLossRecord[] = [];
  const featureVectors: Float32Array[] = [];
  const frameIds: string[] = [];

  for (const framePath of framePaths) {
    const frameId = basename(framePath).replace(/\.pgm$/i, '');
    const image = readPgm(framePath);
    const features = extractFeatures(image, spec.grid);
    featureVectors.push(features);
    frameIds.push(frameId);

    for (let pass = 0; pass < cfg.passes; pass++) {
      const mask = cfg.dropout
        ? dropoutMask(
            features.length,
            spec.dropout_rate,
            new CounterRng(cfg.seed, 'dropout', frameId, pass),
          )
        : null;
      const result = forward(spec, image, features, mask);
      records.push({ frame_id: frameId, pass_id: pass, detections: result.detections });
    }

    if (cfg.gradLoss) {
      // grad-loss uses the deterministic (dropout-off) forward pass
      const clean = forward(spec, image, features, null);
      gradRecords.push({ frame_id: frameId, grad_loss: gradLoss(spec, image, clean) });
    }
  }

  const detectionsPath = join(cfg.outDir, 'detections.jsonl');
  const featuresPath = join(cfg.outDir, `${cfg.domainId}.fvec`);
  writeDetections(records, detectionsPath);
  writeFeatures(featureVectors, frameIds, featuresPath);
  const files = [detectionsPath, featuresPath];
  if (cfg.gradLoss) {
    const gradPath = join(cfg.outDir, 'grad_loss.jsonl');
    writeGradLoss(gradRecords, gradPath);
    files.push(gradPath);
  }

  // schema self-validation: abort the export on any failure
  const detections = validateDetectionsFile(detectionsPath);
  validateFeaturesFile(featuresPath);
  if (cfg.gradLoss) validateGradLossFile(join(cfg.outDir, 'grad_loss.jsonl'));

  return {
    frames: framePaths.length,
    passes: cfg.passes,
    detectionLines: records.length,
    detections,
    files,
  };
}
