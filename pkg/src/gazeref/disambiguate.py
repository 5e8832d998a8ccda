"""Three-stage correction pipeline: collect, filter, localize.

Candidates come from global segmentation merged with detector boxes, are
cleaned of noisy fragments and of boxes violating the commanded spatial
relation, then scored against the target descriptor.  A winner needs a score
strictly above the localization threshold; otherwise the pipeline falls back
to a best-guess question.  Every stage emits a structured trace record so a
failed trial can be attributed to the stage that lost the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backends.base import Backend, ScenePatch
from .config import PipelineConfig
from .describe import ContextRegion, Description
from .geometry import (
    BBox,
    CandidateBox,
    CandidateSource,
    Mask,
    Side,
    mask_to_tight_box,
    nms,
    side_of,
)
from .parsing import (
    OrdinalPosition,
    ParsedCommand,
    Relation,
    RelationKind,
    RelationRoute,
    relation_route,
)


class EmptyCandidates(RuntimeError):
    """Both candidate sources came back empty for this context."""


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[CandidateBox, ...]
    context: ContextRegion
    gaze_centroid: tuple[float, float]

    def __post_init__(self) -> None:
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique")

    def by_id(self, candidate_id: int) -> CandidateBox:
        for candidate in self.candidates:
            if candidate.id == candidate_id:
                return candidate
        raise KeyError(f"no candidate {candidate_id}")

    def replaced(self, candidates: list[CandidateBox]) -> "CandidateSet":
        return CandidateSet(tuple(candidates), self.context, self.gaze_centroid)


@dataclass(frozen=True)
class LocalizationResult:
    scores: dict[int, float] = field(default_factory=dict)
    rationales: dict[int, str] = field(default_factory=dict)
    selected_id: Optional[int] = None
    selected_score: Optional[float] = None
    fallback: Optional[Description] = None
    fallback_candidate_id: Optional[int] = None

    @property
    def is_selected(self) -> bool:
        return self.selected_id is not None


def _candidates_payload(candidates) -> list[dict]:
    return [
        {"id": c.id, "box": c.box.to_payload(), "source": c.source.value}
        for c in candidates
    ]


def collect_candidates(
    context: ContextRegion,
    gaze_centroid: tuple[float, float],
    backend: Backend,
    config: PipelineConfig,
) -> tuple[CandidateSet, dict]:
    """Global-segmentation boxes merged with detector boxes inside the context."""
    raw: list[CandidateBox] = []
    next_id = 0
    for mask in backend.segment_everything():
        if mask.is_empty():
            continue
        box = mask_to_tight_box(mask)
        if box.intersect(context.box) is None:
            continue
        raw.append(CandidateBox(box, CandidateSource.GLOBAL_SEG, next_id, mask))
        next_id += 1
    for detection in backend.detect():
        if detection.box.area() == 0 or detection.box.intersect(context.box) is None:
            continue
        raw.append(
            CandidateBox(detection.box, CandidateSource.DETECTOR, next_id, label=detection.label)
        )
        next_id += 1
    if not raw:
        raise EmptyCandidates("no candidates from segmentation or detection")
    merged = [c.with_id(i) for i, c in enumerate(nms(raw, config.nms_iou_threshold))]
    record = {
        "stage": "collect",
        "raw_count": len(raw),
        "candidates": _candidates_payload(merged),
    }
    return CandidateSet(tuple(merged), context, gaze_centroid), record


def filter_noisy(candidate_set: CandidateSet, backend: Backend) -> tuple[CandidateSet, dict]:
    """Drop boxes judged noisy; never drop the final remaining candidate."""
    kept: list[CandidateBox] = []
    dropped: list[CandidateBox] = []
    for candidate in candidate_set.candidates:
        if backend.judge_noisy(ScenePatch(candidate.box)):
            dropped.append(candidate)
        else:
            kept.append(candidate)
    floored = False
    if not kept and candidate_set.candidates:
        kept = [min(candidate_set.candidates, key=lambda c: c.id)]
        dropped = [c for c in candidate_set.candidates if c.id != kept[0].id]
        floored = True
    record = {
        "stage": "filter_noisy",
        "kept": [c.id for c in kept],
        "dropped": [c.id for c in dropped],
        "floored": floored,
    }
    return candidate_set.replaced(kept), record


def resolve_reference_box(
    command: ParsedCommand,
    previous_mask: Optional[Mask],
    candidate_set: CandidateSet,
    backend: Backend,
    threshold: float,
) -> tuple[Optional[BBox], dict]:
    """Reference anchor box: previous selection by default, re-scored when the
    command names a reference object explicitly."""
    previous_box = (
        mask_to_tight_box(previous_mask)
        if previous_mask is not None and not previous_mask.is_empty()
        else None
    )
    reference = command.reference
    if reference is None or reference.is_pronoun or not reference.attributes():
        record = {
            "stage": "reference",
            "mode": "previous_selection",
            "box": previous_box.to_payload() if previous_box else None,
        }
        return previous_box, record

    if previous_box is not None:
        score, _ = backend.score_patch(ScenePatch(previous_box), reference)
        if score >= threshold:
            record = {
                "stage": "reference",
                "mode": "previous_selection_confirmed",
                "score": score,
                "box": previous_box.to_payload(),
            }
            return previous_box, record

    best: Optional[CandidateBox] = None
    best_score = -1.0
    for candidate in candidate_set.candidates:
        score, _ = backend.score_patch(ScenePatch(candidate.box), reference)
        if score > best_score:
            best, best_score = candidate, score
    if best is not None and best_score >= threshold:
        record = {
            "stage": "reference",
            "mode": "rescored",
            "candidate_id": best.id,
            "score": best_score,
            "box": best.box.to_payload(),
        }
        return best.box, record
    record = {"stage": "reference", "mode": "unresolved", "box": None}
    return None, record


_SIDE_BY_KIND = {
    RelationKind.LEFT: Side.LEFT,
    RelationKind.RIGHT: Side.RIGHT,
    RelationKind.ABOVE: Side.ABOVE,
    RelationKind.BELOW: Side.BELOW,
}


def _distance(point: tuple[float, float], box: BBox) -> float:
    cx, cy = box.center()
    return math.hypot(cx - point[0], cy - point[1])


def spatial_filter(
    candidate_set: CandidateSet,
    reference_box: Optional[BBox],
    relation: Relation,
    config: PipelineConfig,
) -> tuple[CandidateSet, dict]:
    """Relation-driven candidate filtering.

    Geometric sides apply the overlap-margin predicate against the reference;
    proximity relations keep the closest ``keep_n`` candidates around the
    reference center (or the gaze centroid without one); ordinal and belonging
    relations pass through untouched.  A filter that would empty the set is
    bypassed and flagged instead.
    """
    route = relation_route(relation)
    candidates = list(candidate_set.candidates)
    passthrough_reason = None

    if route is RelationRoute.GEOMETRIC and reference_box is not None:
        side = _SIDE_BY_KIND[relation.kind]
        kept = [
            c for c in candidates
            if side_of(c.box, reference_box, side, config.side_overlap_alpha)
        ]
        mode = f"side:{side.value}"
    elif route in (RelationRoute.PROXIMITY, RelationRoute.GEOMETRIC):
        # geometric relation without a reference degrades to proximity
        anchor = (
            reference_box.center() if reference_box is not None else candidate_set.gaze_centroid
        )
        ordered = sorted(candidates, key=lambda c: (_distance(anchor, c.box), c.id))
        kept = ordered[: config.keep_n]
        mode = f"proximity:keep{config.keep_n}"
    else:
        kept = candidates
        mode = "passthrough:" + route.value

    if not kept and candidates:
        kept = candidates
        passthrough_reason = "filter would have emptied the candidate set"
    record = {
        "stage": "spatial_filter",
        "mode": mode,
        "kept": [c.id for c in kept],
        "dropped": [c.id for c in candidates if all(c.id != k.id for k in kept)],
        "passthrough": passthrough_reason,
    }
    return candidate_set.replaced(kept), record


def box_fill_mask(box: BBox, width: int, height: int) -> Mask:
    arr = np.zeros((height, width), dtype=bool)
    clamped = box.clamp(width, height)
    arr[clamped.y0 : clamped.y1, clamped.x0 : clamped.x1] = True
    return Mask.from_array(arr)


def localize(
    command: ParsedCommand,
    candidate_set: CandidateSet,
    reference_box: Optional[BBox],
    backend: Backend,
    config: PipelineConfig,
    canvas_size: tuple[int, int],
) -> tuple[LocalizationResult, dict]:
    """Score candidates against the target; ordinal positions sort by center.

    A winner must score strictly above the threshold, else the result is a
    fallback carrying a best-guess description of the top-scoring candidate.
    """
    threshold = config.localization_threshold
    candidates = list(candidate_set.candidates)
    if not candidates:
        result = LocalizationResult()
        return result, {"stage": "localize", "outcome": "fallback", "scores": {}}

    scores: dict[int, float] = {}
    rationales: dict[int, str] = {}
    for candidate in candidates:
        score, rationale = backend.score_patch(ScenePatch(candidate.box), command.target)
        scores[candidate.id] = score
        rationales[candidate.id] = rationale

    anchor = (
        reference_box.center()
        if reference_box is not None
        else candidate_set.gaze_centroid
    )
    winner: Optional[CandidateBox] = None
    relation = command.relation
    if relation.kind is RelationKind.ORDINAL:
        matches = [c for c in candidates if scores[c.id] >= threshold]
        matches.sort(key=lambda c: (c.box.center()[0], c.id))
        index = _ordinal_index(relation, len(matches))
        if index is not None:
            winner = matches[index]
    else:
        ranked = sorted(
            candidates,
            key=lambda c: (-scores[c.id], _distance(anchor, c.box), c.id),
        )
        winner = ranked[0]

    if winner is not None and scores[winner.id] > threshold:
        result = LocalizationResult(
            scores=scores,
            rationales=rationales,
            selected_id=winner.id,
            selected_score=scores[winner.id],
        )
        record = {
            "stage": "localize",
            "outcome": "selected",
            "winner": winner.id,
            "scores": {str(k): v for k, v in scores.items()},
            "rationales": {str(k): v for k, v in rationales.items()},
        }
        return result, record

    guess = max(candidates, key=lambda c: (scores[c.id], -c.id))
    width, height = canvas_size
    guess_mask = (
        guess.mask if guess.mask is not None else box_fill_mask(guess.box, width, height)
    )
    description = backend.describe_free(guess_mask, candidate_set.context)
    result = LocalizationResult(
        scores=scores,
        rationales=rationales,
        fallback=description,
        fallback_candidate_id=guess.id,
    )
    record = {
        "stage": "localize",
        "outcome": "fallback",
        "best_guess": guess.id,
        "scores": {str(k): v for k, v in scores.items()},
        "rationales": {str(k): v for k, v in rationales.items()},
    }
    return result, record


def _ordinal_index(relation: Relation, count: int) -> Optional[int]:
    if count == 0:
        return None
    position = relation.ordinal
    if position is OrdinalPosition.LEFTMOST:
        return 0
    if position is OrdinalPosition.RIGHTMOST:
        return count - 1
    if position is OrdinalPosition.MIDDLE:
        return math.ceil(count / 2) - 1
    n = relation.n or 0
    if n < 1 or n > count:
        return None
    return n - 1


def update_mask(
    result: LocalizationResult, candidate_set: CandidateSet, backend: Backend
) -> Mask:
    """Winning candidate's mask, segmenting by box when only a box is known."""
    if not result.is_selected:
        raise ValueError("update_mask requires a selected localization result")
    winner = candidate_set.by_id(result.selected_id)
    if winner.mask is not None:
        return winner.mask
    return backend.segment_box(winner.box)
