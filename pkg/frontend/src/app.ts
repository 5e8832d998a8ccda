// Console wiring: click to gaze-select, read the description, type
// corrections, watch the mask move. All state lives on the service; this
// client only renders snapshots and turns.

import { ApiClient, ApiError } from "./api.js";
import { blendMask } from "./overlay.js";
import { decodeMask, masksEqual } from "./rle.js";
import { digestTrace } from "./trace.js";
import type { MaskPayload, NoisePreset, TurnRecord } from "./types.js";

const api = new ApiClient("");

interface ConsoleState {
  sessionId: string | null;
  sceneId: string | null;
  sceneWidth: number;
  sceneHeight: number;
  roundsUsed: number;
  maxRounds: number;
  awaitingFallback: boolean;
  roundLimitReached: boolean;
  seenTurns: Set<number>;
  lastTrace: TurnRecord | null;
}

const state: ConsoleState = {
  sessionId: null,
  sceneId: null,
  sceneWidth: 0,
  sceneHeight: 0,
  roundsUsed: 0,
  maxRounds: 2,
  awaitingFallback: false,
  roundLimitReached: false,
  seenTurns: new Set(),
  lastTrace: null,
};

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const sceneSelect = element<HTMLSelectElement>("scene-select");
const presetSelect = element<HTMLSelectElement>("noise-preset");
const canvas = element<HTMLCanvasElement>("scene-canvas");
const transcript = element<HTMLUListElement>("transcript");
const commandInput = element<HTMLInputElement>("command-input");
const sendButton = element<HTMLButtonElement>("send-command");
const yesButton = element<HTMLButtonElement>("confirm-yes");
const noButton = element<HTMLButtonElement>("confirm-no");
const roundsLabel = element<HTMLSpanElement>("rounds-label");
const banner = element<HTMLDivElement>("error-banner");
const inspector = element<HTMLDivElement>("trace-inspector");
const traceToggle = element<HTMLInputElement>("show-trace");

let baseImage: HTMLImageElement | null = null;

async function loadScenes(): Promise<void> {
  const { scenes } = await api.listScenes();
  sceneSelect.innerHTML = "";
  for (const scene of scenes) {
    const option = document.createElement("option");
    option.value = scene.id;
    option.textContent = `${scene.id} (${scene.objects} objects)`;
    sceneSelect.appendChild(option);
  }
}

async function startSession(): Promise<void> {
  const sceneId = sceneSelect.value;
  const created = await api.createSession(sceneId);
  state.sessionId = created.session_id;
  state.sceneId = sceneId;
  state.sceneWidth = created.snapshot.scene.width;
  state.sceneHeight = created.snapshot.scene.height;
  state.roundsUsed = created.snapshot.rounds_used;
  state.maxRounds = created.snapshot.max_rounds;
  state.awaitingFallback = false;
  state.roundLimitReached = false;
  state.seenTurns = new Set();
  state.lastTrace = null;
  transcript.innerHTML = "";
  inspector.textContent = "No correction trace yet.";
  hideBanner();

  canvas.width = state.sceneWidth;
  canvas.height = state.sceneHeight;
  baseImage = new Image();
  baseImage.src = api.sceneRasterUrl(sceneId);
  await baseImage.decode();
  await redraw(null);
  subscribeToEvents();
  updateControls();
}

function subscribeToEvents(): void {
  if (!state.sessionId) return;
  const source = new EventSource(api.eventsUrl(state.sessionId));
  source.onmessage = (event) => {
    const turn = JSON.parse(event.data) as TurnRecord;
    appendTurn(turn);
  };
  source.onerror = () => source.close();
}

async function redraw(mask: MaskPayload | null): Promise<void> {
  if (!baseImage) return;
  const context = canvas.getContext("2d");
  if (!context) return;
  context.drawImage(baseImage, 0, 0);
  if (mask) {
    const decoded = decodeMask(mask);
    const verification = await api.currentMask(state.sessionId!);
    if (verification.mask) {
      // thin-client invariant: our decode matches the service payload exactly
      const reference = decodeMask(verification.mask);
      if (!masksEqual(decoded, reference)) {
        showBanner("mask decode mismatch against service payload", "client");
      }
    }
    const imageData = context.getImageData(0, 0, canvas.width, canvas.height);
    blendMask(imageData.data, decoded);
    context.putImageData(imageData, 0, 0);
  }
  if (traceToggle.checked && state.lastTrace) {
    drawTrace(context, state.lastTrace);
  }
}

function drawTrace(context: CanvasRenderingContext2D, turn: TurnRecord): void {
  const view = digestTrace(turn.trace);
  for (const candidate of view.candidates) {
    const [x0, y0, x1, y1] = candidate.box;
    const alive = Object.values(candidate.keptBy).every((kept) => kept);
    context.lineWidth = candidate.id === view.winnerId ? 3 : 1;
    context.strokeStyle = candidate.id === view.winnerId
      ? "#00c853"
      : alive
        ? "#ffd600"
        : "rgba(120,120,120,0.8)";
    context.strokeRect(x0, y0, x1 - x0, y1 - y0);
    context.fillStyle = "#111";
    context.font = "12px monospace";
    const label = candidate.score !== undefined
      ? `${candidate.id}:${candidate.score.toFixed(2)}`
      : String(candidate.id);
    context.fillText(label, x0 + 2, Math.max(y0 - 3, 10));
  }
}

function appendTurn(turn: TurnRecord): void {
  if (state.seenTurns.has(turn.index)) return;
  state.seenTurns.add(turn.index);
  const item = document.createElement("li");
  item.className = `turn ${turn.actor} ${turn.kind}`;
  const who = turn.actor === "user" ? "you" : "system";
  item.textContent = `[${who}] ${turn.text ?? "(gaze selection)"}`;
  transcript.appendChild(item);
  transcript.scrollTop = transcript.scrollHeight;
}

function renderInspector(turn: TurnRecord): void {
  if (!turn.trace.length) return;
  state.lastTrace = turn;
  const view = digestTrace(turn.trace);
  const lines: string[] = [];
  for (const stage of view.stages) {
    lines.push(
      `${stage.stage}: kept ${stage.keptIds.length ? stage.keptIds.join(",") : "-"}` +
        (stage.droppedIds.length ? ` dropped ${stage.droppedIds.join(",")}` : "") +
        (stage.note ? ` (${stage.note})` : ""),
    );
  }
  for (const candidate of view.candidates) {
    if (candidate.score !== undefined) {
      lines.push(`#${candidate.id} score ${candidate.score.toFixed(2)} ${candidate.rationale ?? ""}`);
    }
  }
  inspector.textContent = lines.join("\n");
}

function updateControls(): void {
  const active = state.sessionId !== null;
  const blocked = !active || state.roundLimitReached;
  commandInput.disabled = blocked;
  sendButton.disabled = blocked;
  yesButton.hidden = !state.awaitingFallback || state.roundLimitReached;
  noButton.hidden = yesButton.hidden;
  roundsLabel.textContent = active
    ? `rounds ${state.roundsUsed}/${state.maxRounds}` +
      (state.roundLimitReached ? " - limit reached, gaze-select again" : "")
    : "no session";
}

function showBanner(message: string, stage?: string): void {
  banner.hidden = false;
  banner.textContent = stage ? `[${stage}] ${message}` : message;
}

function hideBanner(): void {
  banner.hidden = true;
  banner.textContent = "";
}

async function handleTurnResponse(promise: Promise<{
  turn: TurnRecord;
  rounds_used: number;
  max_rounds: number;
}>): Promise<void> {
  try {
    const response = await promise;
    hideBanner();
    applyTurn(response.turn, response.rounds_used, response.max_rounds);
  } catch (error) {
    if (error instanceof ApiError) {
      const body = error.payload as Record<string, any>;
      if (body.turn) {
        applyTurn(body.turn as TurnRecord, body.rounds_used, body.max_rounds);
      }
      if (error.status === 409) {
        state.roundLimitReached = true;
        showBanner("round limit reached for this selection", "session");
      } else {
        const stage = body?.error?.stage ?? body?.error?.kind ?? "service";
        showBanner(String(body?.error?.message ?? error.message), String(stage));
      }
      updateControls();
    } else {
      showBanner(String(error));
    }
  }
}

function applyTurn(turn: TurnRecord, roundsUsed?: number, maxRounds?: number): void {
  appendTurn(turn);
  if (roundsUsed !== undefined) state.roundsUsed = roundsUsed;
  if (maxRounds !== undefined) state.maxRounds = maxRounds;
  state.awaitingFallback = turn.kind === "fallback_query";
  // commands stay disabled once the budget is spent; a new gaze selection
  // (canvas click) resets both counters from the service's response
  state.roundLimitReached = state.roundsUsed >= state.maxRounds;
  if (turn.kind === "error" && turn.extra["error"] === "round_limit") {
    state.roundLimitReached = true;
  }
  if (turn.trace.length) renderInspector(turn);
  if (turn.kind === "describe" || turn.kind === "fallback_query") {
    void redraw(turn.mask);
  }
  updateControls();
}

canvas.addEventListener("click", (event) => {
  if (!state.sessionId) return;
  const rect = canvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((event.clientY - rect.top) / rect.height) * canvas.height;
  state.roundLimitReached = false;
  void handleTurnResponse(
    api.clickToGaze(state.sessionId, x, y, presetSelect.value as NoisePreset),
  );
});

sendButton.addEventListener("click", () => {
  const text = commandInput.value.trim();
  if (!text || !state.sessionId) return;
  commandInput.value = "";
  void handleTurnResponse(api.sendCommand(state.sessionId, text));
});

commandInput.addEventListener("keydown", (event) => {
  if (event.key === "Enter") sendButton.click();
});

yesButton.addEventListener("click", () => {
  if (state.sessionId) void handleTurnResponse(api.sendCommand(state.sessionId, "yes"));
});

noButton.addEventListener("click", () => {
  commandInput.focus();
  showBanner("describe the object you meant instead", "fallback");
});

traceToggle.addEventListener("change", () => {
  void api.currentMask(state.sessionId!).then(({ mask }) => redraw(mask));
});

element<HTMLButtonElement>("start-session").addEventListener("click", () => {
  void startSession().catch((error) => showBanner(String(error)));
});

void loadScenes().catch((error) => showBanner(`cannot reach service: ${error}`));
updateControls();
