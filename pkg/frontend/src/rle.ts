// Client-side decode of the service's run-length mask serialization.
// Must stay pixel-exact with the wire payload: the overlay contract test
// compares this decode byte-for-byte against a reference decode.

import type { MaskPayload } from "./types.js";

export function decodeMask(mask: MaskPayload): Uint8Array {
  const total = mask.width * mask.height;
  const out = new Uint8Array(total);
  const runs = mask.runs;
  if (runs.length % 2 !== 0) {
    throw new Error("mask runs must hold [start, length] pairs");
  }
  let previousEnd = 0;
  for (let i = 0; i < runs.length; i += 2) {
    const start = runs[i];
    const length = runs[i + 1];
    if (length <= 0) throw new Error(`run ${i / 2} has non-positive length`);
    if (start < previousEnd) throw new Error(`run ${i / 2} overlaps its predecessor`);
    if (start + length > total) throw new Error(`run ${i / 2} exceeds the canvas`);
    out.fill(1, start, start + length);
    previousEnd = start + length;
  }
  return out;
}

export function maskArea(mask: MaskPayload): number {
  let area = 0;
  for (let i = 1; i < mask.runs.length; i += 2) area += mask.runs[i];
  return area;
}

export function masksEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}
