"""HTTP session service: interactive selection over scenes for the console.

All payloads are versioned (``api_version`` 1) and the endpoints map one to
one onto session operations; a console click is expanded into a synthetic
fixation window so the real gaze sampler always runs.  Turn events stream per
session over a server-push channel.
"""
from __future__ import annotations

import io
import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .backends.base import Backend
from .backends.oracle import OracleBackend
from .backends.wire import HttpTransport, WireBackend
from .config import DEFAULT_SESSION_CONFIG, SessionConfig
from .dialog import DialogTurn, TurnKind
from .gaze import GazeSample
from .scene import Scene
from .session import (
    API_VERSION,
    SessionState,
    apply_command,
    dump_log,
    gaze_select,
    snapshot,
    start_session,
)
from .simulate import (
    CALIBRATED_NOISE,
    CONDITION_BY_CODE,
    GazeNoiseModel,
    ZERO_NOISE,
    generate_scene,
    generate_unambiguous_scene,
)

NOISE_PRESETS: dict[str, GazeNoiseModel] = {
    "none": ZERO_NOISE,
    "calibrated": CALIBRATED_NOISE,
    "heavy": GazeNoiseModel(bias_deg=2.5, jitter_std_deg=0.8, saccade_rate=2.0),
}


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8321
    backend_mode: str = "oracle"            # "oracle" | "wire"
    wire_endpoint: Optional[str] = None
    log_dir: Optional[str] = None
    max_sessions: int = 64
    session_config: SessionConfig = field(default_factory=lambda: DEFAULT_SESSION_CONFIG)

    def __post_init__(self) -> None:
        if self.backend_mode not in ("oracle", "wire"):
            raise ValueError(f"unknown backend mode {self.backend_mode!r}")
        if self.backend_mode == "wire" and not self.wire_endpoint:
            raise ValueError("wire backend mode needs an endpoint")


@dataclass
class _Session:
    id: str
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list = field(default_factory=list)


def builtin_scenes() -> dict[str, tuple[Scene, int]]:
    """Demo scenes: one per interesting condition plus a plain layout."""
    scenes: dict[str, tuple[Scene, int]] = {}
    for key, code in (
        ("demo-clean", "C12"),
        ("demo-structural", "C10"),
        ("demo-positional", "C11"),
        ("demo-cluttered", "C9"),
        ("demo-small", "C6"),
    ):
        scene, target_id = generate_scene(CONDITION_BY_CODE[code], f"builtin-{key}")
        scenes[key] = (scene, target_id)
    plain = generate_unambiguous_scene("builtin-plain", object_count=5)
    scenes["demo-plain"] = (plain, plain.objects[0].id)
    return scenes


def _error_response(status: int, kind: str, message: str, **extra) -> JSONResponse:
    payload = {"api_version": API_VERSION, "error": {"kind": kind, "message": message, **extra}}
    return JSONResponse(status_code=status, content=payload)


def _scene_to_png(scene: Scene) -> bytes:
    from PIL import Image

    image = Image.fromarray(np.asarray(scene.color_image), mode="RGB")
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def _overlay_png(scene: Scene, mask) -> bytes:
    from PIL import Image

    base = np.asarray(scene.color_image).copy()
    if mask is not None:
        selected = mask.to_array()
        base[selected] = (0.45 * base[selected] + 0.55 * np.array([255, 64, 64])).astype(np.uint8)
    image = Image.fromarray(base, mode="RGB")
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="gazeref", version="0.1.0")

    scenes: dict[str, tuple[Scene, int]] = builtin_scenes()
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def make_backend(scene: Scene) -> Backend:
        if config.backend_mode == "wire":
            return WireBackend(HttpTransport(config.wire_endpoint))
        return OracleBackend(scene)

    def get_session(session_id: str) -> Optional[_Session]:
        with registry_lock:
            return sessions.get(session_id)

    def publish(session: _Session, turn: DialogTurn) -> None:
        record = turn.to_record()
        for subscriber in list(session.subscribers):
            subscriber.put(record)
        if config.log_dir:
            path = Path(config.log_dir) / f"{session.id}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            if turn.index == 0:
                header = dump_log(session.state).splitlines()[0]
                path.write_text(header + "\n")
            with path.open("a") as handle:
                handle.write(json.dumps({"kind": "turn", "data": record}, sort_keys=True) + "\n")

    def turn_response(session: _Session, turn: DialogTurn):
        publish(session, turn)
        body = {
            "api_version": API_VERSION,
            "turn": turn.to_record(),
            "rounds_used": session.state.rounds_used,
            "max_rounds": session.state.config.max_rounds,
        }
        if turn.kind is TurnKind.ERROR:
            kind = turn.extra.get("error", "turn_error")
            if kind == "round_limit":
                return JSONResponse(status_code=409, content={**body, "error": turn.extra})
            if kind == "backend":
                return JSONResponse(status_code=503, content={**body, "error": turn.extra})
        return JSONResponse(content=body)

    @app.get("/api/v1/scenes")
    def list_scenes():
        return {
            "api_version": API_VERSION,
            "scenes": [
                {
                    "id": scene_id,
                    "name": scene.name,
                    "width": scene.width,
                    "height": scene.height,
                    "objects": len(scene.objects),
                }
                for scene_id, (scene, _) in sorted(scenes.items())
            ],
        }

    @app.post("/api/v1/scenes")
    async def upload_scene(request: Request):
        data = await request.json()
        try:
            scene = Scene.from_dict(data["scene"] if "scene" in data else data)
        except (KeyError, TypeError, ValueError) as exc:
            return _error_response(400, "bad_scene", f"invalid scene document: {exc}")
        scene_id = f"scene-{uuid.uuid4().hex[:8]}"
        with registry_lock:
            scenes[scene_id] = (scene, scene.objects[0].id if scene.objects else 0)
        return {"api_version": API_VERSION, "scene_id": scene_id}

    @app.get("/api/v1/scenes/{scene_id}")
    def get_scene(scene_id: str):
        if scene_id not in scenes:
            return _error_response(404, "unknown_scene", f"no scene {scene_id!r}")
        scene, _ = scenes[scene_id]
        return {"api_version": API_VERSION, "scene": scene.to_dict()}

    @app.get("/api/v1/scenes/{scene_id}/raster.png")
    def scene_raster(scene_id: str):
        if scene_id not in scenes:
            return _error_response(404, "unknown_scene", f"no scene {scene_id!r}")
        scene, _ = scenes[scene_id]
        return Response(content=_scene_to_png(scene), media_type="image/png")

    @app.post("/api/v1/sessions")
    async def create_session(request: Request):
        data = await request.json()
        scene_id = data.get("scene_id")
        if scene_id is None and "scene" in data:
            # inline upload: register the scene and start on it directly
            try:
                scene = Scene.from_dict(data["scene"])
            except (KeyError, TypeError, ValueError) as exc:
                return _error_response(400, "bad_scene", f"invalid scene document: {exc}")
            scene_id = f"scene-{uuid.uuid4().hex[:8]}"
            with registry_lock:
                scenes[scene_id] = (scene, scene.objects[0].id if scene.objects else 0)
        if scene_id not in scenes:
            return _error_response(404, "unknown_scene", f"no scene {scene_id!r}")
        with registry_lock:
            if len(sessions) >= config.max_sessions:
                return _error_response(429, "too_many_sessions", "session limit reached")
            scene, _ = scenes[scene_id]
            state = start_session(scene, make_backend(scene), config.session_config)
            session = _Session(id=f"session-{uuid.uuid4().hex[:12]}", state=state)
            sessions[session.id] = session
        return {
            "api_version": API_VERSION,
            "session_id": session.id,
            "scene_id": scene_id,
            "snapshot": snapshot(state),
        }

    @app.get("/api/v1/sessions/{session_id}")
    def get_snapshot(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            return {"api_version": API_VERSION, "snapshot": snapshot(session.state)}

    @app.post("/api/v1/sessions/{session_id}/gaze")
    async def submit_gaze(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")
        data = await request.json()
        with session.lock:
            state = session.state
            sampler = state.config.sampler
            if "stream" in data:
                stream = [GazeSample.from_record(r) for r in data["stream"]]
                select_time = float(data.get("select_time", 0.0))
            elif "click" in data:
                click = data["click"]
                preset = data.get("noise_preset", "none")
                if preset not in NOISE_PRESETS:
                    return _error_response(400, "bad_preset", f"unknown noise preset {preset!r}")
                stream, select_time = _click_to_stream(
                    state.scene, float(click["x"]), float(click["y"]),
                    NOISE_PRESETS[preset], sampler.window_delta, sampler.sample_rate_hz,
                )
            else:
                return _error_response(400, "bad_request", "need a stream or a click")
            turn = gaze_select(state, stream, select_time)
            user_turn = state.history[turn.index - 1] if turn.index >= 1 else None
            if user_turn is not None and user_turn.actor.value == "user":
                publish(session, user_turn)
            return turn_response(session, turn)

    @app.post("/api/v1/sessions/{session_id}/command")
    async def submit_command(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")
        data = await request.json()
        text = data.get("text", "")
        if not isinstance(text, str) or not text.strip():
            return _error_response(400, "bad_request", "command text required")
        with session.lock:
            turn = apply_command(session.state, text)
            user_turn = (
                session.state.history[turn.index - 1] if turn.index >= 1 else None
            )
            if user_turn is not None and user_turn.actor.value == "user":
                publish(session, user_turn)
            return turn_response(session, turn)

    @app.get("/api/v1/sessions/{session_id}/mask.png")
    def mask_overlay(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            png = _overlay_png(session.state.scene, session.state.current_mask)
        return Response(content=png, media_type="image/png")

    @app.get("/api/v1/sessions/{session_id}/mask")
    def mask_rle(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            mask = session.state.current_mask
            return {
                "api_version": API_VERSION,
                "mask": mask.to_payload() if mask else None,
            }

    @app.get("/api/v1/sessions/{session_id}/events")
    def events(session_id: str, limit: Optional[int] = None, poll_seconds: float = 20.0):
        session = get_session(session_id)
        if session is None:
            return _error_response(404, "unknown_session", f"no session {session_id!r}")

        subscriber: "queue.Queue[dict]" = queue.Queue()
        with session.lock:
            backlog = [turn.to_record() for turn in session.state.history]
        session.subscribers.append(subscriber)

        def stream():
            sent = 0
            try:
                for record in backlog:
                    yield f"data: {json.dumps(record, sort_keys=True)}\n\n"
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
                while True:
                    try:
                        record = subscriber.get(timeout=poll_seconds)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(record, sort_keys=True)}\n\n"
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
            finally:
                if subscriber in session.subscribers:
                    session.subscribers.remove(subscriber)

        return StreamingResponse(stream(), media_type="text/event-stream")

    app.state.config = config
    app.state.scenes = scenes
    app.state.sessions = sessions
    return app


def _click_to_stream(
    scene: Scene,
    x: float,
    y: float,
    noise: GazeNoiseModel,
    delta: float,
    rate_hz: float,
) -> tuple[list[GazeSample], float]:
    """Expand a console click into a synthetic fixation window.

    The stream runs through the real sampler path, so noise presets show the
    genuine selection behavior rather than a special-cased bypass.
    """
    import math
    import random

    seed = f"click:{x:.1f}:{y:.1f}"
    ppd = noise.pixels_per_degree
    n = int(round(2 * delta * rate_hz))
    bias_rng = random.Random(f"{seed}|bias")
    angle = bias_rng.uniform(0.0, 2.0 * math.pi)
    bias = (noise.bias_deg * ppd * math.cos(angle), noise.bias_deg * ppd * math.sin(angle))
    jitter_rng = random.Random(f"{seed}|jitter")
    sigma = noise.jitter_std_deg * ppd
    samples = []
    for i in range(n):
        jx = jitter_rng.gauss(0, 1) * sigma
        jy = jitter_rng.gauss(0, 1) * sigma
        samples.append(
            GazeSample(
                t=i / rate_hz,
                x=min(max(x + bias[0] + jx, 0.0), scene.width - 1.0),
                y=min(max(y + bias[1] + jy, 0.0), scene.height - 1.0),
                depth=0.8,
            )
        )
    return samples, delta


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
