/**
 * Batch export of observation and action-text embeddings.
 *
 * For every annotated segment, the clip of width delta centered on each
 * boundary (clamped at time zero) is encoded under "video/seg/start|end".
 * Every distinct refined action label is encoded under "action/<label>".
 * The output is one binary table plus a JSON sidecar recording the
 * encoder identity, delta, dimension, and creation time.
 */

import { promises as fs } from 'node:fs';
import { randomBytes } from 'node:crypto';

import type { VideoAnnotation } from './annotations.js';
import type { ClipSpec, Encoder } from './encoder.js';
import { Table, writeTable } from './format.js';
import { actionKey, endKey, startKey } from './keys.js';

export interface ExportConfig {
  encoder: Encoder;
  /** Boundary clip width in seconds. */
  delta: number;
  /** Frame rate the clip spec is resolved at. */
  fps: number;
}

export interface Sidecar {
  encoder: string;
  delta: number;
  dim: number;
  created: string;
}

export const DEFAULT_DELTA = 2.0;
export const DEFAULT_FPS = 16;

function clipAt(videoId: string, segIndex: number, boundary: 'start' | 'end',
                t: number, cfg: ExportConfig): ClipSpec {
  const half = cfg.delta / 2;
  const t0 = Math.max(0, t - half);
  return { videoId, segIndex, boundary, t0, t1: t0 + cfg.delta, fps: cfg.fps };
}

/**
 * Encode every boundary clip and every label into one table. Vectors are
 * checked against the encoder's declared dimension so drift inside one
 * run fails loudly instead of corrupting the file.
 */
export function exportEmbeddings(
  annotations: VideoAnnotation[],
  labels: string[],
  cfg: ExportConfig,
): Table {
  if (!(cfg.delta > 0)) {
    throw new Error(`delta must be positive seconds, got ${cfg.delta}`);
  }
  if (!(cfg.fps > 0)) {
    throw new Error(`fps must be positive, got ${cfg.fps}`);
  }
  const entries = new Map<string, Float32Array>();
  const put = (key: string, vec: Float32Array) => {
    if (vec.length !== cfg.encoder.dim) {
      throw new Error(
        `encoder dimension drift: got ${vec.length} for ${JSON.stringify(key)}, ` +
        `declared ${cfg.encoder.dim}`,
      );
    }
    if (entries.has(key)) {
      throw new Error(`duplicate key ${JSON.stringify(key)}`);
    }
    entries.set(key, vec);
  };

  for (const ann of annotations) {
    ann.segments.forEach((seg, i) => {
      put(startKey(ann.videoId, i),
          cfg.encoder.encodeClip(clipAt(ann.videoId, i, 'start', seg.ts, cfg)));
      put(endKey(ann.videoId, i),
          cfg.encoder.encodeClip(clipAt(ann.videoId, i, 'end', seg.te, cfg)));
    });
  }
  for (const label of [...new Set(labels)]) {
    put(actionKey(label), cfg.encoder.encodeText(label));
  }
  return { dim: cfg.encoder.dim, entries };
}

/** The observation keys exportEmbeddings will emit, without encoding. */
export function expectedObservationKeys(annotations: VideoAnnotation[]): string[] {
  const keys: string[] = [];
  for (const ann of annotations) {
    ann.segments.forEach((_, i) => {
      keys.push(startKey(ann.videoId, i), endKey(ann.videoId, i));
    });
  }
  return keys;
}

/**
 * Audit a table against annotations: which expected observation keys are
 * absent, and which "<video>/<seg>/<boundary>"-shaped keys are unexpected.
 */
export function auditKeys(
  table: Table,
  annotations: VideoAnnotation[],
): { missing: string[]; unexpected: string[] } {
  const expected = new Set(expectedObservationKeys(annotations));
  const present = new Set(table.entries.keys());
  const missing = [...expected].filter((k) => !present.has(k));
  const obsShaped = [...present].filter((k) => /\/\d+\/(start|end)$/.test(k));
  const unexpected = obsShaped.filter((k) => !expected.has(k));
  return { missing, unexpected };
}

/** Write the table and its sidecar atomically; returns the sidecar. */
export async function writeExport(
  annotations: VideoAnnotation[],
  labels: string[],
  cfg: ExportConfig,
  outPath: string,
  now: () => Date = () => new Date(),
): Promise<Sidecar> {
  const table = exportEmbeddings(annotations, labels, cfg);
  await writeTable(outPath, table);
  const sidecar: Sidecar = {
    encoder: cfg.encoder.id,
    delta: cfg.delta,
    dim: cfg.encoder.dim,
    created: now().toISOString(),
  };
  const sidecarPath = `${outPath}.json`;
  const tmp = `${sidecarPath}.${randomBytes(6).toString('hex')}.tmp`;
  await fs.writeFile(tmp, JSON.stringify(sidecar, null, 2) + '\n');
  await fs.rename(tmp, sidecarPath);
  return sidecar;
}
