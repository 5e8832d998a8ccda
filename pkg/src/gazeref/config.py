"""Pipeline configuration and the deployed default constants.

The defaults here are the operating point of the whole pipeline: a one-second
gaze window at 90 Hz, 150 px of context padding, the 0.5 side-overlap ratio,
the keep-7 proximity rule, the 0.5 localization threshold and two rounds of
correction per selection.  Everything is overridable per session or per run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class SamplerConfig:
    """Gaze sampler parameters (window, features, clustering)."""

    window_delta: float = 0.5          # seconds before and after the trigger
    sample_rate_hz: float = 90.0
    color_weight: float = 1.0
    depth_weight: float = 1.0
    location_weight: float = 2.0
    velocity_weight: float = 1.0
    neighborhood_radius: float = 0.25  # epsilon in normalized feature space
    min_cluster_size: int = 5
    pixels_per_degree: float = 12.0
    smooth_color: bool = False         # 3x3 mean instead of the single pixel

    def __post_init__(self) -> None:
        if self.window_delta <= 0:
            raise ValueError("window_delta must be positive")
        weights = (
            self.color_weight,
            self.depth_weight,
            self.location_weight,
            self.velocity_weight,
        )
        if any(w < 0 for w in weights):
            raise ValueError("feature weights must be non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one feature weight must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    """Disambiguation pipeline parameters."""

    context_padding: int = 150         # sigma, pixels around the mask tight box
    side_overlap_alpha: float = 0.5    # overlap-margin ratio for side predicates
    keep_n: int = 7                    # proximity filter survivor count
    localization_threshold: float = 0.5
    nms_iou_threshold: float = 0.8

    def __post_init__(self) -> None:
        if self.keep_n < 1:
            raise ValueError("keep_n must be at least 1")
        if not 0.0 <= self.side_overlap_alpha <= 1.0:
            raise ValueError("side_overlap_alpha must lie in [0, 1]")
        if not 0.0 < self.nms_iou_threshold <= 1.0:
            raise ValueError("nms_iou_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class SessionConfig:
    """Interactive session limits plus nested stage configs."""

    max_rounds: int = 2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def with_overrides(self, **kwargs) -> "SessionConfig":
        return replace(self, **kwargs)


DEFAULT_SESSION_CONFIG = SessionConfig()
