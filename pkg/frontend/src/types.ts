// Payload types mirroring the service's versioned v1 API.

export interface MaskPayload {
  width: number;
  height: number;
  runs: number[]; // flat [start, length, start, length, ...] over row-major pixels
}

export interface SceneSummary {
  id: string;
  name: string;
  width: number;
  height: number;
  objects: number;
}

export interface SceneObjectDoc {
  id: number;
  category: string;
  color: string;
  polygon: number[][];
  adjectives: string[];
  parts: { name: string; polygon: number[][]; salient: boolean }[];
}

export interface SceneDoc {
  name: string;
  width: number;
  height: number;
  pixels_per_degree: number;
  objects: SceneObjectDoc[];
}

export interface TurnRecord {
  index: number;
  actor: "user" | "system";
  kind: "gaze_select" | "describe" | "command" | "fallback_query" | "error";
  text: string | null;
  mask: MaskPayload | null;
  parsed: unknown;
  described_identity: string | null;
  described_adjectives: string[];
  trace: TraceRecord[];
  extra: Record<string, unknown>;
}

export interface TraceRecord {
  stage: string;
  [key: string]: unknown;
}

export interface TurnResponse {
  api_version: number;
  turn: TurnRecord;
  rounds_used: number;
  max_rounds: number;
  error?: Record<string, unknown>;
}

export interface Snapshot {
  api_version: number;
  scene: { name: string; width: number; height: number };
  rounds_used: number;
  max_rounds: number;
  current_mask: MaskPayload | null;
  gaze_centroid: number[] | null;
  history: TurnRecord[];
}

export type NoisePreset = "none" | "calibrated" | "heavy";
