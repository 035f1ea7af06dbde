/**
 * Reader for the annotation JSON-lines files the curation stage consumes:
 * one object per line with video_id, event_id, and ordered segments of
 * {action_id, ts, te} in seconds.
 */

import { promises as fs } from 'node:fs';

export interface Segment {
  actionId: string;
  ts: number;
  te: number;
}

export interface VideoAnnotation {
  videoId: string;
  eventId: string;
  segments: Segment[];
}

export function parseAnnotationLine(line: string, lineNo: number): VideoAnnotation {
  let row: unknown;
  try {
    row = JSON.parse(line);
  } catch {
    throw new Error(`line ${lineNo}: not valid JSON`);
  }
  const doc = row as Record<string, unknown>;
  const videoId = doc.video_id;
  const eventId = doc.event_id;
  const segments = doc.segments;
  if (typeof videoId !== 'string' || videoId === '') {
    throw new Error(`line ${lineNo}: missing video_id`);
  }
  if (typeof eventId !== 'string' || eventId === '') {
    throw new Error(`line ${lineNo}: missing event_id`);
  }
  if (!Array.isArray(segments) || segments.length === 0) {
    throw new Error(`line ${lineNo}: video ${videoId} has no segments`);
  }
  const parsed: Segment[] = segments.map((seg, i) => {
    const s = seg as Record<string, unknown>;
    if (typeof s.action_id !== 'string' || s.action_id === '') {
      throw new Error(`line ${lineNo}: segment ${i} of ${videoId} missing action_id`);
    }
    const ts = Number(s.ts);
    const te = Number(s.te);
    if (!Number.isFinite(ts) || !Number.isFinite(te) || ts > te || ts < 0) {
      throw new Error(
        `line ${lineNo}: segment ${i} of ${videoId} has bad bounds ts=${s.ts} te=${s.te}`,
      );
    }
    return { actionId: s.action_id, ts, te };
  });
  return { videoId, eventId, segments: parsed };
}

export async function readAnnotations(path: string): Promise<VideoAnnotation[]> {
  const text = await fs.readFile(path, 'utf8');
  const out: VideoAnnotation[] = [];
  const seen = new Set<string>();
  text.split('\n').forEach((line, idx) => {
    if (line.trim() === '') return;
    const ann = parseAnnotationLine(line, idx + 1);
    if (seen.has(ann.videoId)) {
      throw new Error(`duplicate video_id ${JSON.stringify(ann.videoId)} at line ${idx + 1}`);
    }
    seen.add(ann.videoId);
    out.push(ann);
  });
  return out;
}
