import assert from "node:assert/strict";
import { test } from "node:test";

import { blendMask } from "../src/overlay.js";

test("blend only touches masked pixels", () => {
  const rgba = new Uint8ClampedArray([10, 20, 30, 255, 40, 50, 60, 255]);
  const mask = Uint8Array.from([0, 1]);
  blendMask(rgba, mask, { r: 255, g: 0, b: 0, alpha: 0.5 });
  assert.deepEqual([...rgba.slice(0, 4)], [10, 20, 30, 255]);
  assert.deepEqual([...rgba.slice(4)], [Math.round(40 * 0.5 + 255 * 0.5), 25, 30, 255]);
});

test("size mismatch is rejected", () => {
  assert.throws(() => blendMask(new Uint8ClampedArray(8), Uint8Array.from([1])));
});
