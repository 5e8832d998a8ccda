// Thin typed client over the versioned service API. Every console action maps
// to exactly one endpoint; no pipeline logic lives on this side.

import type {
  MaskPayload,
  NoisePreset,
  SceneDoc,
  SceneSummary,
  Snapshot,
  TurnResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public payload: Record<string, unknown>,
  ) {
    super(`API error ${status}: ${JSON.stringify(payload)}`);
  }
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    const body = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(response.status, body);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  listScenes(): Promise<{ scenes: SceneSummary[] }> {
    return this.request("/api/v1/scenes");
  }

  getScene(sceneId: string): Promise<{ scene: SceneDoc }> {
    return this.request(`/api/v1/scenes/${sceneId}`);
  }

  sceneRasterUrl(sceneId: string): string {
    return `${this.baseUrl}/api/v1/scenes/${sceneId}/raster.png`;
  }

  createSession(sceneId: string): Promise<{ session_id: string; snapshot: Snapshot }> {
    return this.post("/api/v1/sessions", { scene_id: sceneId });
  }

  snapshot(sessionId: string): Promise<{ snapshot: Snapshot }> {
    return this.request(`/api/v1/sessions/${sessionId}`);
  }

  clickToGaze(
    sessionId: string,
    x: number,
    y: number,
    preset: NoisePreset,
  ): Promise<TurnResponse> {
    return this.post(`/api/v1/sessions/${sessionId}/gaze`, {
      click: { x, y },
      noise_preset: preset,
    });
  }

  sendCommand(sessionId: string, text: string): Promise<TurnResponse> {
    return this.post(`/api/v1/sessions/${sessionId}/command`, { text });
  }

  currentMask(sessionId: string): Promise<{ mask: MaskPayload | null }> {
    return this.request(`/api/v1/sessions/${sessionId}/mask`);
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/api/v1/sessions/${sessionId}/events`;
  }
}
