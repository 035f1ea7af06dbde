import { mkdtemp, readFile, rm } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, describe, expect, it } from 'vitest';

import { readAnnotations } from '../src/annotations.js';
import { cachedEncoder, hashEncoder } from '../src/encoder.js';
import {
  DEFAULT_DELTA,
  DEFAULT_FPS,
  auditKeys,
  exportEmbeddings,
  writeExport,
} from '../src/export.js';
import { encodeTable } from '../src/format.js';

const HERE = dirname(fileURLToPath(import.meta.url));
const FIXTURE = join(HERE, 'fixtures', 'three_segments.jsonl');

function cfg(dim = 16) {
  return { encoder: hashEncoder(dim), delta: DEFAULT_DELTA, fps: DEFAULT_FPS };
}

describe('export pipeline', () => {
  const dirs: string[] = [];
  afterAll(async () => {
    for (const d of dirs) await rm(d, { recursive: true, force: true });
  });

  it('emits 6 observation keys for a 3-segment video', async () => {
    const anns = await readAnnotations(FIXTURE);
    const table = exportEmbeddings(anns, [], cfg());
    expect([...table.entries.keys()]).toEqual([
      'omelet-v01/0/start', 'omelet-v01/0/end',
      'omelet-v01/1/start', 'omelet-v01/1/end',
      'omelet-v01/2/start', 'omelet-v01/2/end',
    ]);
  });

  it('key audit against the fixture finds zero mismatches', async () => {
    const anns = await readAnnotations(FIXTURE);
    const table = exportEmbeddings(anns, ['crack the eggs'], cfg());
    const audit = auditKeys(table, anns);
    expect(audit.missing).toEqual([]);
    expect(audit.unexpected).toEqual([]);
  });

  it('key audit flags missing and unexpected observation keys', async () => {
    const anns = await readAnnotations(FIXTURE);
    const table = exportEmbeddings(anns, [], cfg());
    table.entries.delete('omelet-v01/1/end');
    table.entries.set('ghost-v9/0/start', new Float32Array(16));
    const audit = auditKeys(table, anns);
    expect(audit.missing).toEqual(['omelet-v01/1/end']);
    expect(audit.unexpected).toEqual(['ghost-v9/0/start']);
  });

  it('emits one text key per distinct label: 122 + 55 -> 177', () => {
    const base = Array.from({ length: 122 }, (_, i) => `base action ${i}`);
    const novel = Array.from({ length: 55 }, (_, i) => `novel action ${i}`);
    const table = exportEmbeddings([], [...base, ...novel, ...base.slice(0, 5)], cfg(8));
    const textKeys = [...table.entries.keys()].filter((k) => k.startsWith('action/'));
    expect(textKeys.length).toBe(177);
  });

  it('re-export with identical config is byte-identical', async () => {
    const anns = await readAnnotations(FIXTURE);
    const labels = ['crack the eggs', 'whisk the eggs'];
    const a = encodeTable(exportEmbeddings(anns, labels, cfg()));
    const b = encodeTable(exportEmbeddings(anns, labels, cfg()));
    expect(a.equals(b)).toBe(true);
  });

  it('different deltas change the observation vectors', async () => {
    const anns = await readAnnotations(FIXTURE);
    const wide = exportEmbeddings(anns, [], { ...cfg(), delta: 4.0 });
    const narrow = exportEmbeddings(anns, [], cfg());
    const key = 'omelet-v01/0/start';
    expect([...wide.entries.get(key)!]).not.toEqual([...narrow.entries.get(key)!]);
  });

  it('clip windows clamp at time zero', async () => {
    const anns = await readAnnotations(FIXTURE);
    // ts = 1.5 with delta 2 would start at 0.5; delta 4 clamps to 0
    const table = exportEmbeddings(anns, [], { ...cfg(), delta: 4.0 });
    expect(table.entries.has('omelet-v01/0/start')).toBe(true);
  });

  it('hash encoder is unit-normalized and input-sensitive', () => {
    const enc = hashEncoder(64);
    const a = enc.encodeText('pour the batter');
    const b = enc.encodeText('pour the batter!');
    const norm = Math.sqrt([...a].reduce((s, x) => s + x * x, 0));
    expect(Math.abs(norm - 1)).toBeLessThan(1e-6);
    expect([...a]).not.toEqual([...b]);
    expect([...enc.encodeText('pour the batter')]).toEqual([...a]);
  });

  it('rejects encoder dimension drift', async () => {
    const anns = await readAnnotations(FIXTURE);
    const broken = {
      ...hashEncoder(16),
      encodeClip: () => new Float32Array(8),
    };
    expect(() =>
      exportEmbeddings(anns, [], { encoder: broken, delta: 2, fps: 16 }),
    ).toThrow(/dimension drift/);
  });

  it('rejects non-positive delta', () => {
    expect(() => exportEmbeddings([], [], { ...cfg(), delta: 0 })).toThrow(/delta/);
  });

  it('cached encoder serves precomputed features and names misses', async () => {
    const anns = await readAnnotations(FIXTURE);
    const features: Record<string, number[]> = {};
    for (const ann of anns) {
      ann.segments.forEach((_, i) => {
        features[`${ann.videoId}/${i}/start`] = [1, 0];
        features[`${ann.videoId}/${i}/end`] = [0, 1];
      });
    }
    features['action/crack the eggs'] = [0.6, 0.8];
    const enc = cachedEncoder(2, features);
    const table = exportEmbeddings(anns, ['crack the eggs'], {
      encoder: enc, delta: 2, fps: 16,
    });
    expect([...table.entries.get('action/crack the eggs')!]).toEqual(
      [Math.fround(0.6), Math.fround(0.8)],
    );
    expect(() =>
      exportEmbeddings(anns, ['unknown label'], { encoder: enc, delta: 2, fps: 16 }),
    ).toThrow(/missing cached features for key "action\/unknown label"/);
  });

  it('writes the table plus a sidecar with encoder, delta, dim, created', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'exp-'));
    dirs.push(dir);
    const anns = await readAnnotations(FIXTURE);
    const out = join(dir, 'obs.emb');
    const fixedNow = () => new Date('2024-05-01T12:00:00Z');
    const sidecar = await writeExport(anns, ['crack the eggs'], cfg(), out, fixedNow);
    expect(sidecar).toEqual({
      encoder: 'hash-v1/dim=16',
      delta: 2,
      dim: 16,
      created: '2024-05-01T12:00:00.000Z',
    });
    const onDisk = JSON.parse(await readFile(`${out}.json`, 'utf8'));
    expect(onDisk).toEqual(sidecar);
  });
});

describe('annotation reader', () => {
  it('parses the fixture', async () => {
    const anns = await readAnnotations(FIXTURE);
    expect(anns).toHaveLength(1);
    expect(anns[0].videoId).toBe('omelet-v01');
    expect(anns[0].segments.map((s) => s.actionId)).toEqual([
      'crack the eggs', 'whisk the eggs', 'fold the omelet',
    ]);
  });
});
