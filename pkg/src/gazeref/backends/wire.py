"""Capability-keyed wire protocol for external model sidecars.

Request:  {"capability": <name>, "request_id": <id>, "payload": {...}}
Response: {"request_id": <id>, "ok": true, "payload": {...}}
          {"request_id": <id>, "ok": false, "error": {"kind": ..., "message": ...}}

Payloads reuse the mask/box serializations, so adapters for real segmentation,
detection and vision-language models can be written in any ecosystem.  The
primary transport is HTTP POST of one JSON request per call; a line-delimited
framing over a byte stream is provided for stdio sidecars.
"""
from __future__ import annotations

import json
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Sequence

import httpx

from ..describe import ContextRegion, Description
from ..dialog import DialogTurn
from ..geometry import BBox, Mask
from ..parsing import ObjectDescriptor, ParseError, ParsedCommand
from .base import (
    CAPABILITIES,
    Backend,
    BackendError,
    BackendUnavailable,
    Detection,
    MalformedResponse,
    ProtocolError,
    ScenePatch,
    SegmentationResult,
)

Transport = Callable[[dict], dict]


class BackendDispatcher:
    """Serves the capability protocol from any backend implementation."""

    def __init__(self, backend: Backend) -> None:
        self.backend = backend

    def handle(self, request: dict) -> dict:
        request_id = request.get("request_id", "")
        capability = request.get("capability")
        payload = request.get("payload", {})
        if capability not in CAPABILITIES:
            return self._error(request_id, "protocol", f"unknown capability {capability!r}")
        try:
            result = getattr(self, f"_{capability}")(payload)
        except ParseError as exc:
            return self._error(request_id, "parse", str(exc), extra={"reason": type(exc).__name__})
        except Exception as exc:  # contract violations surface as typed errors
            return self._error(request_id, "backend", str(exc))
        return {"request_id": request_id, "ok": True, "payload": result}

    @staticmethod
    def _error(request_id: str, kind: str, message: str, extra: Optional[dict] = None) -> dict:
        error = {"kind": kind, "message": message}
        if extra:
            error.update(extra)
        return {"request_id": request_id, "ok": False, "error": error}

    def _segment_point(self, payload: dict) -> dict:
        x, y = payload["point"]
        result = self.backend.segment_point((int(x), int(y)))
        return {
            "masks": [m.to_payload() for m in result.masks],
            "confidences": list(result.confidences),
        }

    def _segment_box(self, payload: dict) -> dict:
        mask = self.backend.segment_box(BBox.from_payload(payload["box"]))
        return {"mask": mask.to_payload()}

    def _segment_everything(self, payload: dict) -> dict:
        return {"masks": [m.to_payload() for m in self.backend.segment_everything()]}

    def _detect(self, payload: dict) -> dict:
        return {
            "boxes": [
                {"box": d.box.to_payload(), "label": d.label}
                for d in self.backend.detect()
            ]
        }

    def _judge_noisy(self, payload: dict) -> dict:
        noisy = self.backend.judge_noisy(ScenePatch(BBox.from_payload(payload["box"])))
        return {"noisy": bool(noisy)}

    def _score_patch(self, payload: dict) -> dict:
        score, rationale = self.backend.score_patch(
            ScenePatch(BBox.from_payload(payload["box"])),
            ObjectDescriptor.from_payload(payload["descriptor"]),
        )
        return {"score": score, "rationale": rationale}

    def _describe_free(self, payload: dict) -> dict:
        description = self.backend.describe_free(
            Mask.from_payload(payload["mask"]),
            ContextRegion.from_payload(payload["context"]),
        )
        return {"description": description.to_payload()}

    def _interpret_command(self, payload: dict) -> dict:
        history = tuple(DialogTurn.from_record(t) for t in payload.get("history", ()))
        command = self.backend.interpret_command(payload["utterance"], history)
        return {"command": command.to_payload()}


class LoopbackTransport:
    """In-process transport that still exercises full JSON serialization."""

    def __init__(self, dispatcher: BackendDispatcher) -> None:
        self.dispatcher = dispatcher

    def __call__(self, request: dict) -> dict:
        wire_request = json.loads(json.dumps(request))
        response = self.dispatcher.handle(wire_request)
        return json.loads(json.dumps(response))


class HttpTransport:
    """One JSON request per POST against a sidecar endpoint.

    ``capability_timeouts`` overrides the default timeout per capability, e.g.
    ``{"segment_everything": 30.0}`` for the slow global pass.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        capability_timeouts: Optional[dict[str, float]] = None,
    ) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.capability_timeouts = dict(capability_timeouts or {})
        self._client = httpx.Client(timeout=timeout)

    def __call__(self, request: dict) -> dict:
        timeout = self.capability_timeouts.get(request.get("capability"), self.timeout)
        try:
            response = self._client.post(self.endpoint, json=request, timeout=timeout)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"sidecar unreachable: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailable(f"sidecar returned HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise MalformedResponse("sidecar returned non-JSON body") from exc

    def close(self) -> None:
        self._client.close()


class LineTransport:
    """Line-delimited JSON over a byte stream pair (stdio sidecars)."""

    def __init__(self, writer, reader) -> None:
        self.writer = writer
        self.reader = reader
        self._lock = threading.Lock()

    def __call__(self, request: dict) -> dict:
        line = json.dumps(request, separators=(",", ":")) + "\n"
        with self._lock:
            try:
                self.writer.write(line.encode("utf-8"))
                self.writer.flush()
                raw = self.reader.readline()
            except (OSError, ValueError) as exc:
                raise BackendUnavailable(f"stdio sidecar failed: {exc}") from exc
        if not raw:
            raise BackendUnavailable("stdio sidecar closed the stream")
        try:
            return json.loads(raw.decode("utf-8"))
        except ValueError as exc:
            raise MalformedResponse("stdio sidecar sent a non-JSON line") from exc


class WireBackend(Backend):
    """Backend implementation that forwards every capability over the wire."""

    def __init__(self, transport: Transport) -> None:
        self.transport = transport

    def _call(self, capability: str, payload: dict) -> dict:
        request_id = uuid.uuid4().hex
        request = {"capability": capability, "request_id": request_id, "payload": payload}
        response = self.transport(request)
        if not isinstance(response, dict) or "ok" not in response:
            raise ProtocolError("response is not a protocol object")
        if response.get("request_id") != request_id:
            raise ProtocolError("response request_id does not match the request")
        if not response["ok"]:
            error = response.get("error", {})
            kind = error.get("kind", "backend")
            message = error.get("message", "unspecified sidecar error")
            if kind == "protocol":
                raise ProtocolError(message)
            if kind == "parse":
                raise SidecarParseError(message, error.get("reason", "Unparseable"))
            raise BackendError(message)
        payload = response.get("payload")
        if not isinstance(payload, dict):
            raise MalformedResponse("missing payload in ok response")
        return payload

    def segment_point(self, point: tuple[int, int]) -> SegmentationResult:
        payload = self._call("segment_point", {"point": [int(point[0]), int(point[1])]})
        masks = payload.get("masks", ())
        confidences = payload.get("confidences", ())
        if len(masks) != 3 or len(confidences) != 3:
            raise MalformedResponse(
                f"segment_point must return exactly 3 masks, got {len(masks)}"
            )
        decoded = tuple(Mask.from_payload(m) for m in masks)
        return SegmentationResult(
            masks=decoded, confidences=tuple(float(c) for c in confidences)
        )

    def segment_box(self, box: BBox) -> Mask:
        payload = self._call("segment_box", {"box": box.to_payload()})
        return Mask.from_payload(payload["mask"])

    def segment_everything(self) -> list[Mask]:
        payload = self._call("segment_everything", {})
        return [Mask.from_payload(m) for m in payload.get("masks", ())]

    def detect(self) -> list[Detection]:
        payload = self._call("detect", {})
        return [
            Detection(box=BBox.from_payload(d["box"]), label=str(d.get("label", "")))
            for d in payload.get("boxes", ())
        ]

    def judge_noisy(self, patch: ScenePatch) -> bool:
        payload = self._call("judge_noisy", {"box": patch.box.to_payload()})
        return bool(payload["noisy"])

    def score_patch(
        self, patch: ScenePatch, descriptor: ObjectDescriptor
    ) -> tuple[float, str]:
        payload = self._call(
            "score_patch",
            {"box": patch.box.to_payload(), "descriptor": descriptor.to_payload()},
        )
        score = float(payload["score"])
        if not 0.0 <= score <= 1.0:
            raise MalformedResponse(f"score {score} outside [0, 1]")
        return score, str(payload.get("rationale", ""))

    def describe_free(self, mask: Mask, context: ContextRegion) -> Description:
        payload = self._call(
            "describe_free",
            {"mask": mask.to_payload(), "context": context.to_payload()},
        )
        return Description.from_payload(payload["description"])

    def interpret_command(
        self, utterance: str, history: Sequence[DialogTurn]
    ) -> ParsedCommand:
        payload = self._call(
            "interpret_command",
            {"utterance": utterance, "history": [t.to_record() for t in history]},
        )
        return ParsedCommand.from_payload(payload["command"])


class SidecarParseError(BackendError):
    """The sidecar's command interpreter rejected the utterance."""

    def __init__(self, message: str, reason: str) -> None:
        super().__init__(message)
        self.reason = reason


def serve_http(dispatcher: BackendDispatcher, host: str, port: int) -> ThreadingHTTPServer:
    """Minimal HTTP sidecar server; returns the started server instance."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self) -> None:  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", 0))
            try:
                request = json.loads(self.rfile.read(length).decode("utf-8"))
            except ValueError:
                self.send_response(400)
                self.end_headers()
                return
            response = dispatcher.handle(request)
            body = json.dumps(response).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args) -> None:
            pass

    server = ThreadingHTTPServer((host, port), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def serve_stdio(dispatcher: BackendDispatcher, reader, writer) -> None:
    """Blocking line-delimited serve loop over a byte stream pair."""
    for raw in reader:
        line = raw.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            continue
        response = dispatcher.handle(request)
        writer.write((json.dumps(response, separators=(",", ":")) + "\n").encode("utf-8"))
        writer.flush()
