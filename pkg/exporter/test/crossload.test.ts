/**
 * Cross-language compatibility: files written here must load bit-exact in
 * the Python planning tools, and files written there must parse here.
 * Skipped automatically when python3 or the Python package is absent.
 */

import { execFileSync } from 'node:child_process';
import { mkdtemp, rm } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, describe, expect, it } from 'vitest';

import { readAnnotations } from '../src/annotations.js';
import { hashEncoder } from '../src/encoder.js';
import { exportEmbeddings } from '../src/export.js';
import { readTable, writeTable } from '../src/format.js';

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_SRC = join(HERE, '..', '..', 'src');
const FIXTURE = join(HERE, 'fixtures', 'three_segments.jsonl');

function python(script: string): string | null {
  try {
    return execFileSync('python3', ['-c', script], {
      encoding: 'utf8',
      env: { ...process.env, PYTHONPATH: REPO_SRC },
    });
  } catch {
    return null;
  }
}

const pythonReady = python('import procplan') !== null;
const maybe = pythonReady ? describe : describe.skip;

maybe('cross-language round trip', () => {
  const dirs: string[] = [];
  afterAll(async () => {
    for (const d of dirs) await rm(d, { recursive: true, force: true });
  });

  it('a file exported here loads in the planning tools bit-exact', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'xload-'));
    dirs.push(dir);
    const anns = await readAnnotations(FIXTURE);
    const labels = ['crack the eggs', 'whisk the eggs', 'fold the omelet'];
    const table = exportEmbeddings(anns, labels, {
      encoder: hashEncoder(32), delta: 2, fps: 16,
    });
    const path = join(dir, 'export.emb');
    await writeTable(path, table);

    const probeKey = 'omelet-v01/1/start';
    const report = python(`
import json
from procplan.embeddings import load_table
t = load_table(${JSON.stringify(path)})
print(json.dumps({
    "dim": t.dim,
    "count": len(t),
    "normalized": t.normalized,
    "keys_head": t.keys()[:2],
    "probe": list(t.get(${JSON.stringify(probeKey)})),
}))
`);
    expect(report).not.toBeNull();
    const doc = JSON.parse(report!);
    expect(doc.dim).toBe(32);
    expect(doc.count).toBe(table.entries.size);
    expect(doc.normalized).toBe(true);
    expect(doc.keys_head).toEqual(['omelet-v01/0/start', 'omelet-v01/0/end']);
    // float32 payload read as float64 on both sides: exact equality
    expect(doc.probe).toEqual([...table.entries.get(probeKey)!]);
  });

  it('the key audit passes from the Python side too', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'xaudit-'));
    dirs.push(dir);
    const anns = await readAnnotations(FIXTURE);
    const table = exportEmbeddings(anns, ['crack the eggs'], {
      encoder: hashEncoder(16), delta: 2, fps: 16,
    });
    const path = join(dir, 'export.emb');
    await writeTable(path, table);

    const report = python(`
import json
from procplan.curation import end_key, read_annotations, start_key
from procplan.embeddings import load_table
t = load_table(${JSON.stringify(path)})
missing = []
for ann in read_annotations(${JSON.stringify(FIXTURE)}):
    for i in range(len(ann.segments)):
        for key in (start_key(ann.video_id, i), end_key(ann.video_id, i)):
            if key not in t:
                missing.append(key)
print(json.dumps({"missing": missing}))
`);
    expect(report).not.toBeNull();
    expect(JSON.parse(report!).missing).toEqual([]);
  });

  it('a file written by the planning tools parses here', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'xwrite-'));
    dirs.push(dir);
    const path = join(dir, 'fromtools.emb');
    const report = python(`
import json
from procplan.embeddings import SynthSpec, save_table, synth_table
spec = SynthSpec(seed=4, dim=6, keys=[f"k{i}" for i in range(10)])
t = synth_table(spec)
save_table(t, ${JSON.stringify(path)})
print(json.dumps({"keys": t.keys(), "first": list(t.get(t.keys()[0]))}))
`);
    expect(report).not.toBeNull();
    const doc = JSON.parse(report!);
    const table = await readTable(path);
    expect(table.dim).toBe(6);
    expect([...table.entries.keys()]).toEqual(doc.keys);
    expect([...table.entries.get(doc.keys[0])!]).toEqual(doc.first);
  });
});

it('reports python availability so skips are visible', () => {
  expect(typeof pythonReady).toBe('boolean');
});
