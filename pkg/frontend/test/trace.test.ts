import assert from "node:assert/strict";
import { test } from "node:test";

import { digestTrace, survivors } from "../src/trace.js";
import type { TraceRecord } from "../src/types.js";

const SAMPLE: TraceRecord[] = [
  { stage: "parse", command: {} },
  {
    stage: "collect",
    raw_count: 5,
    candidates: [
      { id: 0, box: [0, 0, 10, 10], source: "global_seg" },
      { id: 1, box: [20, 0, 30, 10], source: "global_seg" },
      { id: 2, box: [40, 0, 50, 10], source: "detector" },
    ],
  },
  { stage: "filter_noisy", kept: [0, 1], dropped: [2], floored: false },
  { stage: "reference", mode: "previous_selection", box: null },
  { stage: "spatial_filter", mode: "proximity:keep7", kept: [0, 1], dropped: [], passthrough: null },
  {
    stage: "localize",
    outcome: "selected",
    winner: 1,
    scores: { "0": 0.0, "1": 1.0 },
    rationales: { "0": "miss", "1": "hit" },
  },
];

test("digest tracks per-stage survival", () => {
  const view = digestTrace(SAMPLE);
  assert.equal(view.outcome, "selected");
  assert.equal(view.winnerId, 1);
  assert.equal(view.candidates.length, 3);
  const dropped = view.candidates.find((c) => c.id === 2)!;
  assert.equal(dropped.keptBy["filter_noisy"], false);
  const alive = survivors(view).map((c) => c.id);
  assert.deepEqual(alive, [0, 1]);
});

test("digest carries scores and rationales", () => {
  const view = digestTrace(SAMPLE);
  const winner = view.candidates.find((c) => c.id === 1)!;
  assert.equal(winner.score, 1.0);
  assert.equal(winner.rationale, "hit");
});

test("fallback outcome exposes the best guess", () => {
  const trace: TraceRecord[] = [
    {
      stage: "collect",
      raw_count: 1,
      candidates: [{ id: 0, box: [0, 0, 4, 4], source: "detector" }],
    },
    { stage: "localize", outcome: "fallback", best_guess: 0, scores: { "0": 0.25 } },
  ];
  const view = digestTrace(trace);
  assert.equal(view.outcome, "fallback");
  assert.equal(view.winnerId, 0);
});

test("stage notes include filter modes", () => {
  const view = digestTrace(SAMPLE);
  const spatial = view.stages.find((s) => s.stage === "spatial_filter")!;
  assert.match(spatial.note, /proximity:keep7/);
});
