/**
 * Binary embedding table format shared with the Python planning tools.
 *
 * Layout, all little-endian:
 *   magic   8 bytes ASCII "OEPPEMB1"
 *   version u32 (currently 1)
 *   dim     u32
 *   count   u64
 *   records count times: key length u16, key UTF-8 bytes, dim float32 values
 */

import { promises as fs } from 'node:fs';
import { rename, writeFile } from 'node:fs/promises';
import { randomBytes } from 'node:crypto';

export const MAGIC = 'OEPPEMB1';
export const FORMAT_VERSION = 1;

export interface Table {
  dim: number;
  /** Insertion-ordered; iteration order is the on-disk record order. */
  entries: Map<string, Float32Array>;
}

export class FormatError extends Error {}

/** Serialize a table to the binary layout. Keys keep their insertion order. */
export function encodeTable(table: Table): Buffer {
  if (!Number.isInteger(table.dim) || table.dim < 1) {
    throw new FormatError(`dim must be a positive integer, got ${table.dim}`);
  }
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(8 + 4 + 4 + 8);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(FORMAT_VERSION, 8);
  header.writeUInt32LE(table.dim, 12);
  header.writeBigUInt64LE(BigInt(table.entries.size), 16);
  chunks.push(header);

  for (const [key, vec] of table.entries) {
    if (vec.length !== table.dim) {
      throw new FormatError(
        `vector for ${JSON.stringify(key)} has dim ${vec.length}, table dim is ${table.dim}`,
      );
    }
    const keyBytes = Buffer.from(key, 'utf8');
    if (keyBytes.length === 0 || keyBytes.length > 0xffff) {
      throw new FormatError(`key byte length ${keyBytes.length} outside [1, 65535]`);
    }
    const record = Buffer.alloc(2 + keyBytes.length + 4 * table.dim);
    record.writeUInt16LE(keyBytes.length, 0);
    keyBytes.copy(record, 2);
    for (let i = 0; i < table.dim; i++) {
      record.writeFloatLE(vec[i], 2 + keyBytes.length + 4 * i);
    }
    chunks.push(record);
  }
  return Buffer.concat(chunks);
}

/** Parse a buffer in the binary layout back into a table. */
export function decodeTable(buf: Buffer): Table {
  if (buf.length < 24) {
    throw new FormatError(`file truncated: ${buf.length} bytes is smaller than the header`);
  }
  const magic = buf.toString('ascii', 0, 8);
  if (magic !== MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`);
  }
  const version = buf.readUInt32LE(8);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported format version ${version}, expected ${FORMAT_VERSION}`);
  }
  const dim = buf.readUInt32LE(12);
  const count = Number(buf.readBigUInt64LE(16));
  const entries = new Map<string, Float32Array>();
  let off = 24;
  for (let n = 0; n < count; n++) {
    if (off + 2 > buf.length) {
      throw new FormatError(`file truncated in record ${n} key length`);
    }
    const keyLen = buf.readUInt16LE(off);
    off += 2;
    if (off + keyLen + 4 * dim > buf.length) {
      throw new FormatError(`file truncated in record ${n}`);
    }
    const key = buf.toString('utf8', off, off + keyLen);
    off += keyLen;
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      vec[i] = buf.readFloatLE(off + 4 * i);
    }
    off += 4 * dim;
    if (entries.has(key)) {
      throw new FormatError(`duplicate key ${JSON.stringify(key)} in record ${n}`);
    }
    entries.set(key, vec);
  }
  if (off !== buf.length) {
    throw new FormatError(`${buf.length - off} trailing bytes after the last record`);
  }
  return { dim, entries };
}

/** Write atomically: temp file in the same directory, then rename. */
export async function writeTable(path: string, table: Table): Promise<void> {
  const tmp = `${path}.${randomBytes(6).toString('hex')}.tmp`;
  await writeFile(tmp, encodeTable(table));
  await rename(tmp, path);
}

export async function readTable(path: string): Promise<Table> {
  return decodeTable(await fs.readFile(path));
}
