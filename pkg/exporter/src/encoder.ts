/**
 * Frozen encoders. Production runs would wrap a real video/text model;
 * these two are the deterministic stand-ins: a hash-seeded pseudo-encoder
 * for self-contained runs, and a cache reader for precomputed features.
 */

export interface ClipSpec {
  videoId: string;
  segIndex: number;
  boundary: 'start' | 'end';
  /** Clip window in seconds, [t0, t1]. */
  t0: number;
  t1: number;
  fps: number;
}

export interface Encoder {
  /** Identifier recorded in the sidecar, e.g. "hash-v1/dim=128". */
  id: string;
  dim: number;
  encodeText(text: string): Float32Array;
  encodeClip(clip: ClipSpec): Float32Array;
}

/** 64-bit FNV-1a over a UTF-8 string. */
function fnv1a64(text: string): bigint {
  const data = Buffer.from(text, 'utf8');
  let hash = 0xcbf29ce484222325n;
  const prime = 0x100000001b3n;
  const mask = 0xffffffffffffffffn;
  for (const byte of data) {
    hash ^= BigInt(byte);
    hash = (hash * prime) & mask;
  }
  return hash;
}

/** splitmix64: cheap, seedable, good enough to fill feature vectors. */
function splitmix64(seed: bigint): () => number {
  const mask = 0xffffffffffffffffn;
  let state = seed & mask;
  return () => {
    state = (state + 0x9e3779b97f4a7c15n) & mask;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & mask;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & mask;
    z = z ^ (z >> 31n);
    // 53 random bits -> uniform double in [0, 1)
    return Number(z >> 11n) / 2 ** 53;
  };
}

function gaussianUnitVector(seedText: string, dim: number): Float32Array {
  const next = splitmix64(fnv1a64(seedText));
  const vec = new Float32Array(dim);
  for (let i = 0; i < dim; i += 2) {
    // Box-Muller; u in (0, 1] to keep the log finite
    const u = 1 - next();
    const v = next();
    const r = Math.sqrt(-2 * Math.log(u));
    vec[i] = r * Math.cos(2 * Math.PI * v);
    if (i + 1 < dim) {
      vec[i + 1] = r * Math.sin(2 * Math.PI * v);
    }
  }
  let norm = 0;
  for (let i = 0; i < dim; i++) norm += vec[i] * vec[i];
  norm = Math.sqrt(norm);
  for (let i = 0; i < dim; i++) vec[i] = vec[i] / norm;
  return vec;
}

function canonicalClipText(clip: ClipSpec): string {
  return [
    'clip',
    clip.videoId,
    String(clip.segIndex),
    clip.boundary,
    clip.t0.toFixed(3),
    clip.t1.toFixed(3),
    `fps=${clip.fps}`,
  ].join('|');
}

/**
 * Deterministic pseudo-encoder: every input hashes to a unit-normalized
 * Gaussian vector. The same input always maps to the same vector, which
 * is all the export pipeline's determinism contract requires.
 */
export function hashEncoder(dim: number, salt = ''): Encoder {
  if (!Number.isInteger(dim) || dim < 2) {
    throw new Error(`encoder dim must be an integer >= 2, got ${dim}`);
  }
  const tag = salt === '' ? '' : `/salt=${salt}`;
  return {
    id: `hash-v1/dim=${dim}${tag}`,
    dim,
    encodeText: (text) => gaussianUnitVector(`text|${text}|${salt}`, dim),
    encodeClip: (clip) => gaussianUnitVector(`${canonicalClipText(clip)}|${salt}`, dim),
  };
}

/**
 * Reads precomputed features keyed by the exact table key the export will
 * emit. Use this when a real encoder already ran elsewhere.
 */
export function cachedEncoder(
  dim: number,
  features: Record<string, number[]>,
  id = `cached/dim=${dim}`,
): Encoder & { lookup(key: string): Float32Array } {
  const lookup = (key: string): Float32Array => {
    const feat = features[key];
    if (feat === undefined) {
      throw new Error(`missing cached features for key ${JSON.stringify(key)}`);
    }
    if (feat.length !== dim) {
      throw new Error(
        `cached features for ${JSON.stringify(key)} have dim ${feat.length}, expected ${dim}`,
      );
    }
    return Float32Array.from(feat);
  };
  return {
    id,
    dim,
    lookup,
    encodeText: (text) => lookup(`action/${text}`),
    encodeClip: (clip) => lookup(`${clip.videoId}/${clip.segIndex}/${clip.boundary}`),
  };
}
