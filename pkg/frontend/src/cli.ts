#!/usr/bin/env node
/**
 * driftbench-export: run a dropout-enabled toy detector over a directory
 * of PGM frames and write toolkit-format detections, feature vectors,
 * and optional grad-loss scalars.
 *
 * Exit codes: 0 success, 1 usage error, 2 export/validation error.
 */

import { mkdirSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { parseArgs } from 'node:util';

import { runExport } from './exporter.js';

const USAGE = `usage: driftbench-export --model spec.json --frames dir/ --out dir/
    [--passes N] [--seed S] [--dropout | --no-dropout] [--grad-loss]
    [--domain NAME]`;

export function main(argv: string[]): number {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        model: { type: 'string' },
        frames: { type: 'string' },
        out: { type: 'string' },
        passes: { type: 'string', default: '2' },
        seed: { type: 'string', default: '0' },
        dropout: { type: 'boolean', default: true },
        'no-dropout': { type: 'boolean', default: false },
        'grad-loss': { type: 'boolean', default: false },
        domain: { type: 'string', default: 'export' },
        help: { type: 'boolean', default: false },
      },
    });
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    console.error(USAGE);
    return 1;
  }
  const v = args.values;
  if (v.help) {
    console.log(USAGE);
    return 0;
  }
  if (!v.model || !v.frames || !v.out) {
    console.error('usage error: --model, --frames, and --out are required');
    console.error(USAGE);
    return 1;
  }
  const passes = Number.parseInt(v.passes as string, 10);
  const seed = Number.parseInt(v.seed as string, 10);
  if (!Number.isInteger(passes) || !Number.isInteger(seed)) {
    console.error('usage error: --passes and --seed must be integers');
    return 1;
  }
  try {
    mkdirSync(v.out as string, { recursive: true });
    const summary = runExport({
      modelPath: v.model as string,
      framesDir: v.frames as string,
      outDir: v.out as string,
      passes,
      seed,
      dropout: (v.dropout as boolean) && !(v['no-dropout'] as boolean),
      gradLoss: v['grad-loss'] as boolean,
      domainId: v.domain as string,
    });
    console.log(JSON.stringify(summary));
    return 0;
  } catch (err) {
    console.error(`export error: ${(err as Error).message}`);
    return 2;
  }
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  process.exitCode = main(process.argv.slice(2));
}
