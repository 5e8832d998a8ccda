from .base import (
    CAPABILITIES,
    Backend,
    BackendDegradation,
    BackendError,
    BackendUnavailable,
    Detection,
    MalformedResponse,
    ProtocolError,
    ScenePatch,
    SegmentationResult,
)
from .oracle import OracleBackend, OracleTuning
from .wire import (
    BackendDispatcher,
    HttpTransport,
    LineTransport,
    LoopbackTransport,
    SidecarParseError,
    WireBackend,
    serve_http,
    serve_stdio,
)

__all__ = [
    "CAPABILITIES",
    "Backend",
    "BackendDegradation",
    "BackendError",
    "BackendUnavailable",
    "Detection",
    "MalformedResponse",
    "ProtocolError",
    "ScenePatch",
    "SegmentationResult",
    "OracleBackend",
    "OracleTuning",
    "BackendDispatcher",
    "HttpTransport",
    "LineTransport",
    "LoopbackTransport",
    "SidecarParseError",
    "WireBackend",
    "serve_http",
    "serve_stdio",
]
