#!/usr/bin/env node
/**
 * Command line wrapper around the export pipeline.
 *
 *   procplan-export --annotations data/annotations.jsonl \
 *                   --labels labels.txt --out observations.emb \
 *                   [--dim 128] [--delta 2] [--fps 16] [--features cache.json]
 *
 * --labels is a text file with one refined action label per line. With
 * --features the cached encoder reads precomputed vectors from a JSON
 * object keyed by table key; otherwise the deterministic hash encoder
 * stands in for a real frozen model.
 */

import { promises as fs } from 'node:fs';
import { parseArgs } from 'node:util';

import { readAnnotations } from './annotations.js';
import { cachedEncoder, hashEncoder } from './encoder.js';
import { DEFAULT_DELTA, DEFAULT_FPS, writeExport } from './export.js';

async function main(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      annotations: { type: 'string' },
      labels: { type: 'string' },
      out: { type: 'string' },
      dim: { type: 'string', default: '128' },
      delta: { type: 'string', default: String(DEFAULT_DELTA) },
      fps: { type: 'string', default: String(DEFAULT_FPS) },
      features: { type: 'string' },
    },
  });
  if (!values.annotations || !values.labels || !values.out) {
    console.error('usage: procplan-export --annotations <jsonl> --labels <txt> --out <emb>'
      + ' [--dim N] [--delta S] [--fps N] [--features <json>]');
    return 1;
  }
  const dim = Number(values.dim);
  const annotations = await readAnnotations(values.annotations);
  const labelText = await fs.readFile(values.labels, 'utf8');
  const labels = labelText.split('\n').map((l) => l.trim()).filter((l) => l !== '');

  const encoder = values.features
    ? cachedEncoder(dim, JSON.parse(await fs.readFile(values.features, 'utf8')))
    : hashEncoder(dim);
  const cfg = { encoder, delta: Number(values.delta), fps: Number(values.fps) };
  const sidecar = await writeExport(annotations, labels, cfg, values.out);
  const nObs = annotations.reduce((n, a) => n + 2 * a.segments.length, 0);
  console.log(`wrote ${values.out}: ${nObs} observation keys, `
    + `${new Set(labels).size} action keys, dim ${sidecar.dim}`);
  console.log(`sidecar ${values.out}.json (encoder ${sidecar.encoder}, delta ${sidecar.delta}s)`);
  return 0;
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  },
);
