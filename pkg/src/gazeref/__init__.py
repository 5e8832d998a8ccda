"""Gaze-driven physical object referencing with voice-command disambiguation."""

from .config import DEFAULT_SESSION_CONFIG, PipelineConfig, SamplerConfig, SessionConfig
from .geometry import BBox, CandidateBox, CandidateSource, Mask, Side

__all__ = [
    "DEFAULT_SESSION_CONFIG",
    "PipelineConfig",
    "SamplerConfig",
    "SessionConfig",
    "BBox",
    "CandidateBox",
    "CandidateSource",
    "Mask",
    "Side",
]

__version__ = "0.1.0"
