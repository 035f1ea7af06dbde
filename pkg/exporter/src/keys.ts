/**
 * Key schemes shared with the Python planning tools. Producers and
 * consumers must agree on these strings byte for byte.
 */

/** Observation at the start boundary of a segment: "video/seg/start". */
export function startKey(videoId: string, segIndex: number): string {
  return `${videoId}/${segIndex}/start`;
}

/** Observation at the end boundary of a segment: "video/seg/end". */
export function endKey(videoId: string, segIndex: number): string {
  return `${videoId}/${segIndex}/end`;
}

/** Text embedding of a refined action label: "action/<label>". */
export function actionKey(label: string): string {
  return `action/${label}`;
}
