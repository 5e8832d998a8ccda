"""Ground-truth oracle backends over synthetic scenes.

Confidence constants are fixtures chosen to reproduce the pipeline's known
success and failure modes on demand: the whole-object granularity wins when
the prompt lands on a plain object, while a salient part wins on structurally
complex objects, planting the part-level selection error the correction flow
must recover from.  All outputs are deterministic in (scene, config, seed).
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..describe import ContextRegion, Description, describe_selection
from ..dialog import DialogTurn
from ..geometry import BBox, GeometryError, Mask, iou
from ..parsing import (
    COLOR_ALIASES,
    COLOR_TERMS,
    ObjectDescriptor,
    ParsedCommand,
    parse,
    resolve_pronouns,
    singularize,
)
from ..scene import Scene, SceneObject
from .base import (
    Backend,
    BackendDegradation,
    BackendError,
    Detection,
    ScenePatch,
    SegmentationResult,
)


@dataclass(frozen=True)
class OracleTuning:
    """Fixture constants; configuration, not truth claims."""

    confidence_part: float = 0.7
    confidence_object: float = 0.9
    confidence_group: float = 0.6
    confidence_salient_part: float = 0.95
    confidence_background: tuple[float, float, float] = (0.5, 0.3, 0.2)
    group_dilation: int = 10
    noisy_iou_floor: float = 0.4
    noisy_multi_object_fraction: float = 0.3
    noisy_background_fraction: float = 0.8


def _stable_rng(*key_parts) -> random.Random:
    return random.Random("|".join(str(p) for p in key_parts))


class OracleBackend(Backend):
    def __init__(
        self,
        scene: Scene,
        degradation: Optional[BackendDegradation] = None,
        tuning: Optional[OracleTuning] = None,
    ) -> None:
        self.scene = scene
        self.degradation = degradation or BackendDegradation()
        self.tuning = tuning or OracleTuning()

    # -- segmentation ------------------------------------------------------

    def segment_point(self, point: tuple[int, int]) -> SegmentationResult:
        x, y = int(point[0]), int(point[1])
        scene = self.scene
        if not (0 <= x < scene.width and 0 <= y < scene.height):
            raise GeometryError(f"prompt point ({x}, {y}) off canvas")
        obj = scene.object_at(x, y)
        tuning = self.tuning
        if obj is None:
            background = scene.background_mask_at(x, y)
            return SegmentationResult(
                masks=(background, background, background),
                confidences=tuning.confidence_background,
            )
        object_mask = scene.visible_mask(obj.id)
        part = scene.part_at(obj, x, y)
        if part is not None:
            part_mask = scene.part_mask(obj.id, part.name)
            part_confidence = (
                tuning.confidence_salient_part if part.salient else tuning.confidence_part
            )
        else:
            part_mask = object_mask
            part_confidence = tuning.confidence_part
        group_mask = self._group_mask(obj)
        return SegmentationResult(
            masks=(part_mask, object_mask, group_mask),
            confidences=(part_confidence, tuning.confidence_object, tuning.confidence_group),
        )

    def _group_mask(self, obj: SceneObject) -> Mask:
        scene = self.scene
        dilated = (
            scene.tight_box(obj.id)
            .expand(self.tuning.group_dilation)
            .clamp(scene.width, scene.height)
        )
        arr = scene.visible_mask(obj.id).to_array()
        for other in scene.objects:
            if other.id == obj.id:
                continue
            other_mask = scene.visible_mask(other.id)
            if other_mask.is_empty():
                continue
            if scene.tight_box(other.id).intersect(dilated) is not None:
                arr = arr | other_mask.to_array()
        return Mask.from_array(arr)

    def segment_box(self, box: BBox) -> Mask:
        best: Optional[SceneObject] = None
        best_iou = 0.0
        for obj in self.scene.objects:
            mask = self.scene.visible_mask(obj.id)
            if mask.is_empty():
                continue
            overlap = iou(box, self.scene.tight_box(obj.id))
            if overlap > best_iou:
                best, best_iou = obj, overlap
        if best is None:
            raise BackendError(f"box {box} overlaps no object")
        return self.scene.visible_mask(best.id)

    # -- global detection --------------------------------------------------

    def _dropped(self, capability: str, *key) -> bool:
        rate = self.degradation.detect_miss_rate
        if rate <= 0.0:
            return False
        rng = _stable_rng(self.degradation.seed, self.scene.name, capability, *key)
        return rng.random() < rate

    def segment_everything(self) -> list[Mask]:
        out: list[Mask] = []
        floor = self.degradation.min_detectable_area
        for obj in self.scene.objects:
            mask = self.scene.visible_mask(obj.id)
            if mask.area() >= max(floor, 1) and not self._dropped("segment_everything", obj.id):
                out.append(mask)
            for part in obj.parts:
                if not part.salient:
                    continue
                part_mask = self.scene.part_mask(obj.id, part.name)
                if part_mask.area() >= max(floor, 1) and not self._dropped(
                    "segment_everything", obj.id, part.name
                ):
                    out.append(part_mask)
        return out

    def detect(self) -> list[Detection]:
        out: list[Detection] = []
        floor = self.degradation.min_detectable_area
        for obj in self.scene.objects:
            mask = self.scene.visible_mask(obj.id)
            if mask.is_empty() or mask.area() < max(floor, 1):
                continue
            if self._dropped("detect", obj.id):
                continue
            out.append(Detection(box=self.scene.tight_box(obj.id), label=obj.category))
        return out

    # -- judging and scoring -----------------------------------------------

    def _box_object_areas(self, box: BBox) -> tuple[dict[int, int], int, int]:
        clamped = box.clamp(self.scene.width, self.scene.height)
        if clamped.area() == 0:
            return {}, 0, 0
        region = self.scene.label_map[clamped.y0 : clamped.y1, clamped.x0 : clamped.x1]
        counts = np.bincount(region.reshape(-1))
        areas = {i: int(c) for i, c in enumerate(counts) if i > 0 and c > 0}
        background = int(counts[0]) if len(counts) else 0
        return areas, background, clamped.area()

    def judge_noisy(self, patch: ScenePatch) -> bool:
        box = patch.box
        tuning = self.tuning
        best_iou = 0.0
        for obj in self.scene.objects:
            mask = self.scene.visible_mask(obj.id)
            if mask.is_empty():
                continue
            best_iou = max(best_iou, iou(box, self.scene.tight_box(obj.id)))
        if best_iou < tuning.noisy_iou_floor:
            return True
        areas, background, box_area = self._box_object_areas(box)
        if box_area == 0:
            return True
        substantial = sum(
            1 for a in areas.values() if a >= tuning.noisy_multi_object_fraction * box_area
        )
        if substantial >= 2:
            return True
        return background >= tuning.noisy_background_fraction * box_area

    def _dominant_object(self, box: BBox) -> Optional[SceneObject]:
        areas, _, _ = self._box_object_areas(box)
        if not areas:
            return None
        dominant_id = max(sorted(areas), key=lambda i: areas[i])
        return self.scene.object_by_id(dominant_id)

    def score_patch(
        self, patch: ScenePatch, descriptor: ObjectDescriptor
    ) -> tuple[float, str]:
        attributes = descriptor.attributes()
        if not attributes:
            return 0.0, "empty descriptor"
        obj = self._dominant_object(patch.box)
        if obj is None:
            return 0.0, "background patch"
        verdicts: list[str] = []
        matched = 0
        for index, attribute in enumerate(attributes):
            is_identity = index == 0 and bool(descriptor.identity)
            ok = (
                _identity_matches(attribute, obj.category)
                if is_identity
                else _attribute_matches(attribute, obj)
            )
            matched += int(ok)
            verdicts.append(f"{attribute}{'+' if ok else '-'}")
        score = matched / len(attributes)
        noise = self._score_noise(patch.box, attributes)
        noisy_score = min(max(score + noise, 0.0), 1.0)
        rationale = (
            f"{obj.color} {obj.category}: {matched}/{len(attributes)} "
            f"({' '.join(verdicts)})"
        )
        return noisy_score, rationale

    def _score_noise(self, box: BBox, attributes: tuple[str, ...]) -> float:
        sigma = self.degradation.scorer_noise
        if sigma <= 0.0:
            return 0.0
        rng = _stable_rng(
            self.degradation.seed, self.scene.name, "score_patch",
            box.to_payload(), attributes,
        )
        return rng.gauss(0.0, sigma)

    # -- language ----------------------------------------------------------

    def describe_free(self, mask: Mask, context: ContextRegion) -> Description:
        return describe_selection(self.scene, mask, context)

    def interpret_command(
        self, utterance: str, history: Sequence[DialogTurn]
    ) -> ParsedCommand:
        return resolve_pronouns(parse(utterance, history), history)


_IDENTITY_SYNONYMS = {
    "toy": "bear toy",
    "headphone": "headphones",
    "can": "beverage can",
    "beverage": "beverage can",
    "bag": "snack bag",
}


def _identity_matches(identity: str, category: str) -> bool:
    d = singularize(identity.strip().lower())
    c = category.lower()
    if d == c:
        return True
    if _IDENTITY_SYNONYMS.get(d) == c:
        return True
    return d in c.split()


def _attribute_matches(attribute: str, obj: SceneObject) -> bool:
    word = COLOR_ALIASES.get(attribute, attribute)
    if word in COLOR_TERMS:
        return word == obj.color
    return word in obj.adjectives
