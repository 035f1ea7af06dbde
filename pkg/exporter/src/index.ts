export { MAGIC, FORMAT_VERSION, FormatError, encodeTable, decodeTable, readTable, writeTable } from './format.js';
export type { Table } from './format.js';
export { startKey, endKey, actionKey } from './keys.js';
export { hashEncoder, cachedEncoder } from './encoder.js';
export type { ClipSpec, Encoder } from './encoder.js';
export { parseAnnotationLine, readAnnotations } from './annotations.js';
export type { Segment, VideoAnnotation } from './annotations.js';
export {
  DEFAULT_DELTA,
  DEFAULT_FPS,
  auditKeys,
  expectedObservationKeys,
  exportEmbeddings,
  writeExport,
} from './export.js';
export type { ExportConfig, Sidecar } from './export.js';
