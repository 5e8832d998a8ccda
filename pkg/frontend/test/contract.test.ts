// API-level contract test against a live oracle-mode service: the full
// click -> describe -> command -> update round trip, byte-exact RLE decode,
// round-limit and fallback-confirmation flows.
import assert from "node:assert/strict";
import { spawn, ChildProcess } from "node:child_process";
import { after, before, test } from "node:test";

import { ApiClient, ApiError } from "../src/api.js";
import { decodeMask, masksEqual } from "../src/rle.js";

const PORT = 8461;
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess | null = null;
const api = new ApiClient(BASE);

const PAIR_SCENE = {
  name: "contract-pair",
  width: 300,
  height: 300,
  objects: [
    {
      id: 1,
      category: "cup",
      color: "red",
      polygon: [[50, 120], [110, 120], [110, 180], [50, 180]],
      adjectives: [],
      parts: [],
    },
    {
      id: 2,
      category: "album",
      color: "gold",
      polygon: [[170, 120], [240, 120], [240, 180], [170, 180]],
      adjectives: [],
      parts: [],
    },
  ],
};

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/api/v1/scenes`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not come up");
}

before(async () => {
  service = spawn(
    "python3",
    ["-m", "gazeref.cli", "serve", "--host", "127.0.0.1", "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForService();
});

after(() => {
  service?.kill("SIGTERM");
});

async function uploadPairScene(): Promise<string> {
  const response = await fetch(`${BASE}/api/v1/scenes`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ scene: PAIR_SCENE }),
  });
  assert.ok(response.ok);
  const body = (await response.json()) as { scene_id: string };
  return body.scene_id;
}

test("click -> describe -> command -> update round trip with exact RLE", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const sessionId = created.session_id;

  const gazeTurn = await api.clickToGaze(sessionId, 80, 150, "none");
  assert.equal(gazeTurn.turn.kind, "describe");
  assert.match(gazeTurn.turn.text ?? "", /^I've selected/);
  assert.ok(gazeTurn.turn.mask);

  // client-side decode of the turn mask equals the service's mask payload
  const served = await api.currentMask(sessionId);
  assert.ok(served.mask);
  const fromTurn = decodeMask(gazeTurn.turn.mask!);
  const fromService = decodeMask(served.mask!);
  assert.ok(masksEqual(fromTurn, fromService));
  assert.deepEqual(gazeTurn.turn.mask, served.mask);

  const commandTurn = await api.sendCommand(sessionId, "select the gold album");
  assert.equal(commandTurn.turn.kind, "describe");
  assert.match(commandTurn.turn.text ?? "", /gold album/);
  assert.equal(commandTurn.rounds_used, 1);

  const updated = await api.currentMask(sessionId);
  assert.ok(updated.mask);
  assert.notDeepEqual(updated.mask, served.mask);
  // the updated mask covers the album's region: spot-check one pixel
  const decoded = decodeMask(updated.mask!);
  const albumIndex = 150 * 300 + 200; // (200, 150) inside the album
  const cupIndex = 150 * 300 + 80;    // (80, 150) inside the cup
  assert.equal(decoded[albumIndex], 1);
  assert.equal(decoded[cupIndex], 0);

  // snapshot history contains the full dialog so far
  const { snapshot } = await api.snapshot(sessionId);
  assert.equal(snapshot.history.length, 4);
  assert.deepEqual(snapshot.current_mask, updated.mask);
});

test("round limit flow returns a structured 409", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const sessionId = created.session_id;
  await api.clickToGaze(sessionId, 80, 150, "none");
  await api.sendCommand(sessionId, "select the gold album");
  await api.sendCommand(sessionId, "select the red cup");
  await assert.rejects(
    () => api.sendCommand(sessionId, "select the gold album"),
    (error: unknown) => {
      assert.ok(error instanceof ApiError);
      assert.equal(error.status, 409);
      const payload = error.payload as any;
      assert.equal(payload.error.error, "round_limit");
      assert.equal(payload.error.max_rounds, 2);
      return true;
    },
  );
});

test("fallback question is confirmable through the yes flow", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const sessionId = created.session_id;
  await api.clickToGaze(sessionId, 80, 150, "none");

  const fallback = await api.sendCommand(sessionId, "select the purple pumpkin");
  assert.equal(fallback.turn.kind, "fallback_query");
  assert.match(fallback.turn.text ?? "", /^Do you want to select /);

  const confirmed = await api.sendCommand(sessionId, "yes");
  assert.equal(confirmed.turn.kind, "describe");
  assert.equal(confirmed.turn.extra["confirmed"], true);
});

test("unparseable commands do not consume the round budget", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const sessionId = created.session_id;
  await api.clickToGaze(sessionId, 80, 150, "none");
  const reply = await api.sendCommand(sessionId, "try again");
  assert.equal(reply.turn.kind, "error");
  assert.equal(reply.rounds_used, 0);
});

test("noise presets are accepted and still run the sampler path", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const turn = await api.clickToGaze(created.session_id, 80, 150, "calibrated");
  assert.ok(["describe", "error"].includes(turn.turn.kind));
});

test("event stream replays the dialog", async () => {
  const sceneId = await uploadPairScene();
  const created = await api.createSession(sceneId);
  const sessionId = created.session_id;
  await api.clickToGaze(sessionId, 80, 150, "none");
  const response = await fetch(`${BASE}/api/v1/sessions/${sessionId}/events?limit=2`);
  const text = await response.text();
  const events = text
    .split("\n\n")
    .filter((chunk) => chunk.startsWith("data: "))
    .map((chunk) => JSON.parse(chunk.slice("data: ".length)));
  assert.equal(events.length, 2);
  assert.equal(events[0].kind, "gaze_select");
  assert.equal(events[1].kind, "describe");
});
