import assert from "node:assert/strict";
import { test } from "node:test";

import { decodeMask, maskArea, masksEqual } from "../src/rle.js";
import type { MaskPayload } from "../src/types.js";

test("decode fixture matches reference bytes exactly", () => {
  const payload: MaskPayload = { width: 4, height: 3, runs: [1, 2, 6, 1, 9, 3] };
  const expected = Uint8Array.from([0, 1, 1, 0, 0, 0, 1, 0, 0, 1, 1, 1]);
  const decoded = decodeMask(payload);
  assert.equal(Buffer.compare(Buffer.from(decoded), Buffer.from(expected)), 0);
  assert.equal(maskArea(payload), 6);
});

test("decode empty mask", () => {
  const decoded = decodeMask({ width: 3, height: 2, runs: [] });
  assert.deepEqual([...decoded], [0, 0, 0, 0, 0, 0]);
});

test("decode full-canvas run", () => {
  const decoded = decodeMask({ width: 2, height: 2, runs: [0, 4] });
  assert.deepEqual([...decoded], [1, 1, 1, 1]);
});

test("reference decode agrees with an independent loop", () => {
  const payload: MaskPayload = {
    width: 7,
    height: 5,
    runs: [3, 4, 10, 2, 20, 10, 33, 1],
  };
  const independent = new Uint8Array(payload.width * payload.height);
  for (let i = 0; i < payload.runs.length; i += 2) {
    for (let j = 0; j < payload.runs[i + 1]; j++) {
      independent[payload.runs[i] + j] = 1;
    }
  }
  assert.ok(masksEqual(decodeMask(payload), independent));
});

test("overlapping runs are rejected", () => {
  assert.throws(() => decodeMask({ width: 4, height: 4, runs: [0, 3, 2, 2] }));
});

test("run past the canvas is rejected", () => {
  assert.throws(() => decodeMask({ width: 4, height: 4, runs: [14, 4] }));
});

test("masksEqual detects differences", () => {
  assert.ok(masksEqual(Uint8Array.from([1, 0]), Uint8Array.from([1, 0])));
  assert.ok(!masksEqual(Uint8Array.from([1, 0]), Uint8Array.from([0, 1])));
  assert.ok(!masksEqual(Uint8Array.from([1]), Uint8Array.from([1, 0])));
});
