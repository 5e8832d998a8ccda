"""The seven model capabilities the pipeline consumes, as a backend protocol.

Real deployments plug in segmentation / detection / vision-language sidecars;
desk-scale verification plugs in ground-truth oracles.  Both must satisfy the
same contracts, which the shared contract test suite enforces.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence

from ..describe import ContextRegion, Description
from ..dialog import DialogTurn
from ..geometry import BBox, Mask
from ..parsing import ObjectDescriptor, ParsedCommand


class BackendError(RuntimeError):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """Transport failure or timeout talking to a model sidecar."""


class MalformedResponse(BackendError):
    """A sidecar answered outside its capability contract."""


class ProtocolError(BackendError):
    """Request/response violated the wire protocol itself."""


@dataclass(frozen=True)
class SegmentationResult:
    """Exactly three masks of increasing scope with their confidences."""

    masks: tuple[Mask, Mask, Mask]
    confidences: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.masks) != 3 or len(self.confidences) != 3:
            raise MalformedResponse("segmentation must return exactly 3 masks")
        for c in self.confidences:
            if not (c == c and abs(c) != float("inf")):
                raise MalformedResponse("non-finite confidence")

    def best(self) -> tuple[Mask, float]:
        index = max(range(3), key=lambda i: self.confidences[i])
        return self.masks[index], self.confidences[index]


@dataclass(frozen=True)
class BackendDegradation:
    """Controlled oracle imperfection for studying failure modes.

    Objects smaller than ``min_detectable_area`` vanish from global
    segmentation and detection; every detection is independently dropped with
    ``detect_miss_rate``; scores receive seeded Gaussian noise.  All effects
    are deterministic functions of the seed.
    """

    min_detectable_area: int = 0
    detect_miss_rate: float = 0.0
    scorer_noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.detect_miss_rate <= 1.0:
            raise ValueError("detect_miss_rate must lie in [0, 1]")
        if self.min_detectable_area < 0 or self.scorer_noise < 0:
            raise ValueError("degradation parameters must be non-negative")


@dataclass(frozen=True)
class ScenePatch:
    """A candidate region referencing canvas pixels by its bounding box."""

    box: BBox


@dataclass(frozen=True)
class Detection:
    box: BBox
    label: str


class Backend(abc.ABC):
    """Capability surface consumed by the selection and correction pipeline."""

    @abc.abstractmethod
    def segment_point(self, point: tuple[int, int]) -> SegmentationResult:
        """Three-granularity segmentation at a point prompt."""

    @abc.abstractmethod
    def segment_box(self, box: BBox) -> Mask:
        """Box-prompted segmentation of the best-overlap object."""

    @abc.abstractmethod
    def segment_everything(self) -> list[Mask]:
        """Global segmentation of every distinguishable region."""

    @abc.abstractmethod
    def detect(self) -> list[Detection]:
        """Open-vocabulary object detection with category labels."""

    @abc.abstractmethod
    def judge_noisy(self, patch: ScenePatch) -> bool:
        """Whether a candidate box shows an insignificant fragment."""

    @abc.abstractmethod
    def score_patch(
        self, patch: ScenePatch, descriptor: ObjectDescriptor
    ) -> tuple[float, str]:
        """Likelihood in [0, 1] that the patch shows the described object."""

    @abc.abstractmethod
    def describe_free(self, mask: Mask, context: ContextRegion) -> Description:
        """Free description of the masked region within its context."""

    @abc.abstractmethod
    def interpret_command(
        self, utterance: str, history: Sequence[DialogTurn]
    ) -> ParsedCommand:
        """Structured reading of a correction command."""


CAPABILITIES = (
    "segment_point",
    "segment_box",
    "segment_everything",
    "detect",
    "judge_noisy",
    "score_patch",
    "describe_free",
    "interpret_command",
)
