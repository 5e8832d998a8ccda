"""Synthetic trial harness: condition-driven scenes, noisy gaze, batch runs.

Scenes are generated for the twelve size/clutter/ambiguity conditions, gaze
streams follow a bias+jitter+saccade noise model, and a scripted user issues
canonical correction commands.  Trial outcomes are classified with the
coverage/precision taxonomy and failed corrections are attributed to the
pipeline stage that lost the target, all deterministically in the seed.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .backends.base import BackendDegradation
from .backends.oracle import OracleBackend
from .config import DEFAULT_SESSION_CONFIG, SessionConfig
from .dialog import TurnKind
from .gaze import GazeSample
from .geometry import BBox, Mask, coverage, iou, precision
from .scene import CATALOG, Scene, SceneObject, ScenePart, rect_polygon
from .session import apply_command, gaze_select, start_session

# -- trial conditions --------------------------------------------------------


class PerceivedSize(Enum):
    SMALL = "small"
    NORMAL = "normal"


class Clutter(Enum):
    CLUTTERED = "cluttered"
    CLEAN = "clean"


class Ambiguity(Enum):
    STRUCTURAL = "structural"
    POSITIONAL = "positional"
    NONE = "none"


@dataclass(frozen=True)
class TrialCondition:
    size: PerceivedSize
    clutter: Clutter
    ambiguity: Ambiguity

    @property
    def code(self) -> str:
        return _CODE_BY_CONDITION[self]


_CONDITION_TABLE: tuple[TrialCondition, ...] = tuple(
    TrialCondition(size, clutter, ambiguity)
    for size in (PerceivedSize.SMALL, PerceivedSize.NORMAL)
    for clutter in (Clutter.CLUTTERED, Clutter.CLEAN)
    for ambiguity in (Ambiguity.STRUCTURAL, Ambiguity.POSITIONAL, Ambiguity.NONE)
)
ALL_CONDITIONS = _CONDITION_TABLE
_CODE_BY_CONDITION = {c: f"C{i + 1}" for i, c in enumerate(_CONDITION_TABLE)}
CONDITION_BY_CODE = {f"C{i + 1}": c for i, c in enumerate(_CONDITION_TABLE)}


class GazeErrorType(Enum):
    PART_OF = "part_of"
    MORE_THAN = "more_than"
    OTHER_OBJECT = "other_object"
    BACKGROUND = "background"


class DisambiguationErrorType(Enum):
    OBJECT_DETECTION = "object_detection"
    OBJECT_FILTERING = "object_filtering"
    HUMAN_COMMAND = "human_command"
    SPEECH_RECOGNITION = "speech_recognition"
    MODEL_COMPREHENSION = "model_comprehension"
    OBJECT_LOCALIZATION = "object_localization"


@dataclass(frozen=True)
class GazeNoiseModel:
    """Constant bias plus per-sample jitter and optional saccade excursions."""

    bias_deg: float = 1.16
    jitter_std_deg: float = 0.22
    saccade_rate: float = 0.0          # events per second
    saccade_amplitude_deg: float = 5.0
    pixels_per_degree: float = 12.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.bias_deg, self.jitter_std_deg, self.saccade_rate,
               self.saccade_amplitude_deg, self.pixels_per_degree) < 0:
            raise ValueError("noise parameters must be non-negative")


ZERO_NOISE = GazeNoiseModel(bias_deg=0.0, jitter_std_deg=0.0, saccade_rate=0.0)
CALIBRATED_NOISE = GazeNoiseModel(bias_deg=1.16, jitter_std_deg=0.22, saccade_rate=0.0)


# -- scene generation --------------------------------------------------------

CANVAS_SIZE = 1080
SMALL_VISUAL_ANGLE_DEG = 5.0
SMALL_SIZE_RANGE = (18, 34)
NORMAL_SIZE_RANGE = (70, 130)
CLEAN_CLEARANCE_DEG = 3.0
CLUTTER_GAP_DEG = 0.5
SALIENT_PART_FRACTION = 0.30
OCCLUSION_AREA_FRACTION = 0.32


class SceneGenerationError(RuntimeError):
    def __init__(self, condition: TrialCondition, seed) -> None:
        super().__init__(
            f"could not place a {condition.code} scene for seed {seed!r}"
        )
        self.condition = condition
        self.seed = seed


def _pick_size(rng: random.Random, size: PerceivedSize) -> tuple[int, int]:
    lo, hi = SMALL_SIZE_RANGE if size is PerceivedSize.SMALL else NORMAL_SIZE_RANGE
    w = rng.randint(lo, hi)
    h = rng.randint(lo, hi)
    return w, h


def _band_parts(
    rng: random.Random, x0: int, y0: int, w: int, h: int
) -> tuple[ScenePart, ...]:
    """2-3 horizontal bands; the salient one crosses the object center and
    stays under 40% of the footprint so the noisy-box filter removes it."""
    frac = SALIENT_PART_FRACTION
    band_top = y0 + h * (0.5 - frac / 2)
    band_bottom = y0 + h * (0.5 + frac / 2)
    parts = [
        ScenePart("band", rect_polygon(x0, band_top, x0 + w, band_bottom), salient=True),
        ScenePart("top section", rect_polygon(x0, y0, x0 + w, band_top)),
    ]
    if rng.random() < 0.5:
        parts.append(
            ScenePart("bottom section", rect_polygon(x0, band_bottom, x0 + w, y0 + h))
        )
    return tuple(parts)


def _boxes_gap(a: BBox, b: BBox) -> float:
    return a.gap_to(b)


def generate_scene(
    condition: TrialCondition,
    seed,
    canvas: int = CANVAS_SIZE,
    pixels_per_degree: float = 12.0,
) -> tuple[Scene, int]:
    """Build a scene whose target satisfies the condition's predicates."""
    rng = random.Random(f"{seed}|{condition.code}|scene")
    clearance = int(CLEAN_CLEARANCE_DEG * pixels_per_degree)
    max_clutter_gap = max(int(CLUTTER_GAP_DEG * pixels_per_degree) - 1, 1)

    for _ in range(64):
        objects: list[SceneObject] = []
        boxes: list[BBox] = []
        next_id = 1

        target_entry = rng.choice(CATALOG)
        target_color = rng.choice(target_entry["colors"])
        tw, th = _pick_size(rng, condition.size)
        margin = 260
        tx = rng.randint(margin, canvas - margin - tw)
        ty = rng.randint(margin, canvas - margin - th)
        target_box = BBox(tx, ty, tx + tw, ty + th)

        parts: tuple[ScenePart, ...] = ()
        if condition.ambiguity is Ambiguity.STRUCTURAL:
            parts = _band_parts(rng, tx, ty, tw, th)

        target = SceneObject(
            id=next_id,
            category=target_entry["category"],
            color=target_color,
            polygon=rect_polygon(tx, ty, tx + tw, ty + th),
            adjectives=tuple(target_entry.get("adjectives", ())),
            parts=parts,
        )
        objects.append(target)
        boxes.append(target_box)
        next_id += 1

        used_categories = {target.category}
        ok = True

        if condition.ambiguity is Ambiguity.POSITIONAL:
            total = rng.randint(3, 5)
            gap = (
                rng.randint(2, max_clutter_gap)
                if condition.clutter is Clutter.CLUTTERED
                else rng.randint(clearance + 4, clearance + 24)
            )
            target_slot = rng.randrange(total)
            row_x = tx - target_slot * (tw + gap)
            for slot in range(total):
                if slot == target_slot:
                    continue
                sx = row_x + slot * (tw + gap)
                sy = ty + rng.randint(-2, 2)
                if sx < 8 or sx + tw > canvas - 8:
                    ok = False
                    break
                sibling_box = BBox(sx, sy, sx + tw, sy + th)
                objects.append(
                    SceneObject(
                        id=next_id,
                        category=target.category,
                        color=target.color,
                        polygon=rect_polygon(sx, sy, sx + tw, sy + th),
                        adjectives=target.adjectives,
                    )
                )
                boxes.append(sibling_box)
                next_id += 1
            if not ok:
                continue

        if condition.clutter is Clutter.CLUTTERED:
            occluder = _place_occluder(rng, target_box, boxes[1:], canvas, used_categories)
            if occluder is None:
                ok = False
            else:
                obj, box = occluder
                objects.append(replace(obj, id=next_id))
                boxes.append(box)
                used_categories.add(obj.category)
                next_id += 1
            adjacent_needed = 3 - sum(
                1 for b in boxes[1:] if _boxes_gap(b, target_box) < max_clutter_gap + 1
            )
            for _ in range(max(adjacent_needed, 0)):
                placed = _place_adjacent(
                    rng, target_box, boxes, canvas, max_clutter_gap, used_categories
                )
                if placed is None:
                    ok = False
                    break
                obj, box = placed
                objects.append(replace(obj, id=next_id))
                boxes.append(box)
                used_categories.add(obj.category)
                next_id += 1
        else:
            anchors = rng.randint(2, 3)
            for _ in range(anchors):
                placed = _place_clear(
                    rng, target_box, boxes, canvas, clearance, used_categories
                )
                if placed is None:
                    ok = False
                    break
                obj, box = placed
                objects.append(replace(obj, id=next_id))
                boxes.append(box)
                used_categories.add(obj.category)
                next_id += 1

        if not ok:
            continue
        scene = Scene(
            name=f"{condition.code}-{seed}",
            width=canvas,
            height=canvas,
            objects=tuple(objects),
            pixels_per_degree=pixels_per_degree,
        )
        if not validate_scene(scene, target.id, condition):
            return scene, target.id
    raise SceneGenerationError(condition, seed)


def _distractor(
    rng: random.Random, used_categories: set[str]
) -> tuple[str, str, tuple[str, ...]]:
    fresh = [e for e in CATALOG if e["category"] not in used_categories]
    entry = rng.choice(fresh if fresh else list(CATALOG))
    return entry["category"], rng.choice(entry["colors"]), tuple(entry.get("adjectives", ()))


def _place_occluder(
    rng: random.Random,
    target: BBox,
    others: list[BBox],
    canvas: int,
    used: set[str],
) -> Optional[tuple[SceneObject, BBox]]:
    """A distractor occluding one full-extent strip of the target.

    The strip spans the target's whole perpendicular extent so the remaining
    visible region keeps a clean rectangular tight box: the target candidate
    must stay recognizable to the noisy-box judge after occlusion.
    """
    category, color, adjectives = _distractor(rng, used)
    tw, th = target.width, target.height
    for _ in range(24):
        side = rng.choice(("left", "right", "top", "bottom"))
        axis_extent = tw if side in ("left", "right") else th
        depth = rng.randint(
            max(int(0.15 * axis_extent), 2), max(int(OCCLUSION_AREA_FRACTION * axis_extent), 3)
        )
        head = rng.randint(4, 12)
        tail = rng.randint(4, 12)
        if side in ("left", "right"):
            oh = th + head + tail
            ow = rng.randint(max(int(tw * 0.6), 12), max(int(tw * 1.2), 16))
            y0 = target.y0 - head
            x0 = target.x0 - ow + depth if side == "left" else target.x1 - depth
        else:
            ow = tw + head + tail
            oh = rng.randint(max(int(th * 0.6), 12), max(int(th * 1.2), 16))
            x0 = target.x0 - head
            y0 = target.y0 - oh + depth if side == "top" else target.y1 - depth
        if x0 < 4 or y0 < 4 or x0 + ow > canvas - 4 or y0 + oh > canvas - 4:
            continue
        box = BBox(x0, y0, x0 + ow, y0 + oh)
        inter = box.intersect(target)
        if inter is None or inter.area() > OCCLUSION_AREA_FRACTION * target.area():
            continue
        if any(box.intersect(b) is not None for b in others):
            continue
        obj = SceneObject(
            id=1, category=category, color=color,
            polygon=rect_polygon(box.x0, box.y0, box.x1, box.y1),
            adjectives=adjectives,
        )
        return obj, box
    return None


def _place_adjacent(
    rng: random.Random,
    target: BBox,
    existing: list[BBox],
    canvas: int,
    max_gap: int,
    used: set[str],
) -> Optional[tuple[SceneObject, BBox]]:
    category, color, adjectives = _distractor(rng, used)
    for _ in range(24):
        w = rng.randint(max(int(target.width * 0.8), 12), max(int(target.width * 1.5), 18))
        h = rng.randint(max(int(target.height * 0.8), 12), max(int(target.height * 1.5), 18))
        gap = rng.randint(1, max_gap)
        side = rng.choice(("left", "right", "top", "bottom"))
        if side == "left":
            x0, y0 = target.x0 - gap - w, target.y0 + rng.randint(-h // 2, target.height // 2)
        elif side == "right":
            x0, y0 = target.x1 + gap, target.y0 + rng.randint(-h // 2, target.height // 2)
        elif side == "top":
            x0, y0 = target.x0 + rng.randint(-w // 2, target.width // 2), target.y0 - gap - h
        else:
            x0, y0 = target.x0 + rng.randint(-w // 2, target.width // 2), target.y1 + gap
        if x0 < 4 or y0 < 4 or x0 + w > canvas - 4 or y0 + h > canvas - 4:
            continue
        box = BBox(x0, y0, x0 + w, y0 + h)
        if any(box.intersect(b) is not None for b in existing):
            continue
        obj = SceneObject(
            id=1, category=category, color=color,
            polygon=rect_polygon(box.x0, box.y0, box.x1, box.y1),
            adjectives=adjectives,
        )
        return obj, box
    return None


def _place_clear(
    rng: random.Random,
    target: BBox,
    existing: list[BBox],
    canvas: int,
    clearance: int,
    used: set[str],
) -> Optional[tuple[SceneObject, BBox]]:
    category, color, adjectives = _distractor(rng, used)
    for _ in range(48):
        w = rng.randint(60, 140)
        h = rng.randint(60, 140)
        x0 = rng.randint(8, canvas - 8 - w)
        y0 = rng.randint(8, canvas - 8 - h)
        box = BBox(x0, y0, x0 + w, y0 + h)
        if _boxes_gap(box, target) < clearance:
            continue
        if any(_boxes_gap(box, b) < 12 for b in existing):
            continue
        # keep anchors near enough to share the description context
        if _boxes_gap(box, target) > 320:
            continue
        obj = SceneObject(
            id=1, category=category, color=color,
            polygon=rect_polygon(box.x0, box.y0, box.x1, box.y1),
            adjectives=adjectives,
        )
        return obj, box
    return None


def validate_scene(
    scene: Scene, target_id: int, condition: TrialCondition
) -> list[str]:
    """Independent checker pass; returns human-readable violations."""
    violations: list[str] = []
    ppd = scene.pixels_per_degree
    small_px = SMALL_VISUAL_ANGLE_DEG * ppd
    clearance = CLEAN_CLEARANCE_DEG * ppd
    clutter_gap = CLUTTER_GAP_DEG * ppd

    for obj in scene.objects:
        if scene.visible_mask(obj.id).is_empty():
            violations.append(f"object {obj.id} is fully occluded")
            return violations

    target = scene.object_by_id(target_id)
    target_box = scene.tight_box(target_id)
    is_small = target_box.width < small_px and target_box.height < small_px
    if condition.size is PerceivedSize.SMALL and not is_small:
        violations.append(f"target {target_box.width}x{target_box.height} is not small")
    if condition.size is PerceivedSize.NORMAL and is_small:
        violations.append(f"target {target_box.width}x{target_box.height} is not normal")

    other_boxes = [
        scene.tight_box(o.id) for o in scene.objects
        if o.id != target_id and not scene.visible_mask(o.id).is_empty()
    ]
    if condition.clutter is Clutter.CLUTTERED:
        close = sum(1 for b in other_boxes if target_box.gap_to(b) < clutter_gap)
        if close < 3:
            violations.append(f"only {close} distractors within {clutter_gap:.0f}px")
        occluded = any(
            scene.tight_box(o.id).intersect(BBox(*_full_box(target))) is not None
            for o in scene.objects if o.id != target_id
        )
        if not occluded:
            violations.append("no occluding distractor")
    else:
        worst = min((target_box.gap_to(b) for b in other_boxes), default=clearance)
        if worst < clearance:
            violations.append(f"distractor at {worst:.0f}px violates clean clearance")

    siblings = [
        o for o in scene.objects
        if o.id != target_id and o.category == target.category and o.color == target.color
    ]
    if condition.ambiguity is Ambiguity.POSITIONAL:
        if len(siblings) < 2:
            violations.append(f"only {len(siblings)} positional siblings")
        for sibling in siblings:
            if abs(scene.tight_box(sibling.id).center()[1] - target_box.center()[1]) > target_box.height:
                violations.append("positional siblings not in a row")
                break
    else:
        if siblings:
            violations.append("unexpected same-category same-color sibling")

    if condition.ambiguity is Ambiguity.STRUCTURAL:
        if not 2 <= len(target.parts) <= 4:
            violations.append(f"target has {len(target.parts)} parts")
        salient = [p for p in target.parts if p.salient]
        if len(salient) != 1:
            violations.append(f"{len(salient)} salient parts")
        else:
            cx, cy = target_box.center()
            part_mask = scene.part_mask(target_id, salient[0].name)
            if not part_mask.contains_point(int(cx), int(cy)):
                violations.append("salient part does not cover the target center")
            if part_mask.area() >= 0.4 * target_box.area():
                violations.append("salient part too large to be filtered as noisy")
    elif target.parts:
        violations.append("non-structural target has parts")
    return violations


def _full_box(obj: SceneObject) -> tuple[int, int, int, int]:
    xs = [p[0] for p in obj.polygon]
    ys = [p[1] for p in obj.polygon]
    return int(min(xs)), int(min(ys)), int(max(xs)), int(max(ys))


def generate_unambiguous_scene(
    seed, canvas: int = CANVAS_SIZE, object_count: Optional[int] = None
) -> Scene:
    """Plain scene of unique (category, color) objects for consistency checks."""
    rng = random.Random(f"{seed}|unambiguous")
    count = object_count or rng.randint(3, 6)
    for _ in range(64):
        entries = rng.sample(list(CATALOG), count)
        objects: list[SceneObject] = []
        boxes: list[BBox] = []
        ok = True
        for i, entry in enumerate(entries):
            placed = False
            for _ in range(48):
                w = rng.randint(60, 140)
                h = rng.randint(60, 140)
                x0 = rng.randint(40, canvas - 40 - w)
                y0 = rng.randint(40, canvas - 40 - h)
                box = BBox(x0, y0, x0 + w, y0 + h)
                if all(box.gap_to(b) >= 30 for b in boxes):
                    boxes.append(box)
                    objects.append(
                        SceneObject(
                            id=i + 1,
                            category=entry["category"],
                            color=rng.choice(entry["colors"]),
                            polygon=rect_polygon(x0, y0, x0 + w, y0 + h),
                            adjectives=tuple(entry.get("adjectives", ())),
                        )
                    )
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            return Scene(
                name=f"unambiguous-{seed}", width=canvas, height=canvas,
                objects=tuple(objects),
            )
    raise SceneGenerationError(TrialCondition(PerceivedSize.NORMAL, Clutter.CLEAN, Ambiguity.NONE), seed)


# -- gaze simulation ---------------------------------------------------------


def simulate_gaze(
    scene: Scene,
    target_id: int,
    noise: GazeNoiseModel,
    delta: float = 0.5,
    rate_hz: float = 90.0,
) -> list[GazeSample]:
    """Fixation at the target center with bias, jitter and saccade excursions.

    The stream covers [0, 2*delta); selecting at t=delta places the whole
    stream inside the sampler window.  Unit noise draws are scaled by the
    model parameters so sweeps with a shared seed vary only in magnitude.
    """
    ppd = noise.pixels_per_degree
    cx, cy = scene.tight_box(target_id).center()
    n = int(round(2 * delta * rate_hz))

    bias_rng = random.Random(f"{noise.seed}|bias")
    angle = bias_rng.uniform(0.0, 2.0 * math.pi)
    bias = (noise.bias_deg * ppd * math.cos(angle), noise.bias_deg * ppd * math.sin(angle))

    jitter_rng = random.Random(f"{noise.seed}|jitter")
    unit_jitter = [(jitter_rng.gauss(0, 1), jitter_rng.gauss(0, 1)) for _ in range(n)]

    saccade_offset: dict[int, tuple[float, float]] = {}
    if noise.saccade_rate > 0:
        saccade_rng = random.Random(f"{noise.seed}|saccade")
        t = 0.0
        while True:
            t += saccade_rng.expovariate(noise.saccade_rate)
            if t >= 2 * delta:
                break
            start = int(t * rate_hz)
            length = saccade_rng.randint(2, 4)
            direction = saccade_rng.uniform(0.0, 2.0 * math.pi)
            offset = (
                noise.saccade_amplitude_deg * ppd * math.cos(direction),
                noise.saccade_amplitude_deg * ppd * math.sin(direction),
            )
            for i in range(start, min(start + length, n)):
                saccade_offset[i] = offset

    samples: list[GazeSample] = []
    sigma = noise.jitter_std_deg * ppd
    for i in range(n):
        jx, jy = unit_jitter[i]
        sx, sy = saccade_offset.get(i, (0.0, 0.0))
        x = cx + bias[0] + jx * sigma + sx
        y = cy + bias[1] + jy * sigma + sy
        samples.append(
            GazeSample(
                t=i / rate_hz,
                x=min(max(x, 0.0), scene.width - 1.0),
                y=min(max(y, 0.0), scene.height - 1.0),
                depth=0.8,
            )
        )
    return samples


# -- outcome classification --------------------------------------------------


def classify_gaze_error(
    mask: Optional[Mask], scene: Scene, target_id: int
) -> Optional[GazeErrorType]:
    """None when the mask counts as correct, else the error type.

    Correct needs coverage >= 0.9 of the target plus precision >= 0.75, the
    precision floor standing in for accurate boundary delineation.
    """
    target = scene.visible_mask(target_id)
    if mask is None or mask.is_empty():
        return GazeErrorType.BACKGROUND
    cov = coverage(mask, target)
    prec = precision(mask, target)
    if cov >= 0.9 and prec >= 0.75:
        return None
    if prec >= 0.75 and cov < 0.9:
        return GazeErrorType.PART_OF
    if cov >= 0.9 and prec < 0.75:
        return GazeErrorType.MORE_THAN
    for obj in scene.objects:
        if obj.id == target_id:
            continue
        other = scene.visible_mask(obj.id)
        if not other.is_empty() and coverage(mask, other) >= 0.5:
            return GazeErrorType.OTHER_OBJECT
    return GazeErrorType.BACKGROUND


_ORDINAL_WORDS = {1: "first", 2: "second", 3: "third", 4: "fourth", 5: "fifth"}


def script_command(
    scene: Scene,
    target_id: int,
    condition: TrialCondition,
    error_type: GazeErrorType,
) -> str:
    """Canonical correction a user would plausibly give for this error."""
    target = scene.object_by_id(target_id)
    if condition.ambiguity is Ambiguity.POSITIONAL:
        group = [
            o for o in scene.objects
            if o.category == target.category and o.color == target.color
        ]
        group.sort(key=lambda o: scene.tight_box(o.id).center()[0])
        index = next(i for i, o in enumerate(group) if o.id == target_id)
        size = len(group)
        if index == 0:
            word = "leftmost"
        elif index == size - 1:
            word = "rightmost"
        elif size % 2 == 1 and index == size // 2:
            word = "middle"
        else:
            word = _ORDINAL_WORDS.get(index + 1, f"{index + 1}th")
        return f"the {word} {target.category}"
    if error_type is GazeErrorType.PART_OF:
        return f"select the whole {target.category}"
    if error_type is GazeErrorType.MORE_THAN:
        return f"select only the {target.color} {target.category}"
    return f"select the {target.color} {target.category}"


@dataclass(frozen=True)
class CorruptionChannels:
    """Optional command corruption emulating speech and user errors."""

    speech_error_rate: float = 0.0
    uninformative_rate: float = 0.0

    def corrupt(
        self, command: str, rng: random.Random
    ) -> tuple[str, Optional[DisambiguationErrorType]]:
        if self.uninformative_rate > 0 and rng.random() < self.uninformative_rate:
            return "try again", DisambiguationErrorType.HUMAN_COMMAND
        if self.speech_error_rate > 0 and rng.random() < self.speech_error_rate:
            words = command.split()
            if len(words) > 1:
                index = rng.randrange(len(words))
                words[index] = rng.choice(("bar", "san", "thing", "blot"))
                return " ".join(words), DisambiguationErrorType.SPEECH_RECOGNITION
        return command, None


# -- trial execution ---------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    condition: str
    trial_index: int
    target_id: int
    first_shot_correct: bool
    final_correct: bool
    rounds_used: int
    gaze_error: Optional[str]
    disambiguation_error: Optional[str]
    commands: tuple[str, ...]
    seed: str
    traces: tuple[tuple[dict, ...], ...] = ()

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "trial_index": self.trial_index,
            "target_id": self.target_id,
            "first_shot_correct": self.first_shot_correct,
            "final_correct": self.final_correct,
            "rounds_used": self.rounds_used,
            "gaze_error": self.gaze_error,
            "disambiguation_error": self.disambiguation_error,
            "commands": list(self.commands),
            "seed": self.seed,
            "traces": [list(trace) for trace in self.traces],
        }


def _target_in_candidates(trace: Sequence[dict], target_box: BBox) -> tuple[bool, bool]:
    """(present after collect, lost by a later filter) from stage records."""
    collected: dict[int, BBox] = {}
    for record in trace:
        if record.get("stage") == "collect":
            for c in record.get("candidates", ()):
                collected[c["id"]] = BBox.from_payload(c["box"])
    target_ids = {
        cid for cid, box in collected.items() if iou(box, target_box) >= 0.5
    }
    if not target_ids:
        return False, False
    surviving = set(target_ids)
    for record in trace:
        if record.get("stage") in ("filter_noisy", "spatial_filter"):
            kept = set(record.get("kept", ()))
            surviving &= kept
    return True, not surviving


def run_trial(
    condition: TrialCondition,
    trial_seed: str,
    trial_index: int,
    noise: GazeNoiseModel,
    degradation: BackendDegradation,
    config: SessionConfig = DEFAULT_SESSION_CONFIG,
    channels: CorruptionChannels = CorruptionChannels(),
) -> TrialRecord:
    scene, target_id = generate_scene(condition, trial_seed)
    backend = OracleBackend(scene, degradation)
    state = start_session(scene, backend, config)
    trial_noise = replace(noise, seed=f"{trial_seed}|gaze")

    stream = simulate_gaze(
        scene, target_id, trial_noise,
        delta=config.sampler.window_delta, rate_hz=config.sampler.sample_rate_hz,
    )
    gaze_select(state, stream, select_time=config.sampler.window_delta)
    gaze_error = classify_gaze_error(state.current_mask, scene, target_id)
    first_correct = gaze_error is None

    commands: list[str] = []
    traces: list[tuple[dict, ...]] = []
    corruption: Optional[DisambiguationErrorType] = None
    channel_rng = random.Random(f"{trial_seed}|channels")
    current_error = gaze_error
    target_box = scene.tight_box(target_id)

    attempts = 0
    while (
        current_error is not None
        and state.current_mask is not None
        and state.rounds_used < config.max_rounds
        and attempts < 2 * config.max_rounds + 2
    ):
        attempts += 1
        command = script_command(scene, target_id, condition, current_error)
        command, fired = channels.corrupt(command, channel_rng)
        if fired is not None:
            corruption = corruption or fired
        commands.append(command)
        turn = apply_command(state, command)
        if turn.trace:
            traces.append(turn.trace)
        if (
            turn.kind is TurnKind.FALLBACK_QUERY
            and state.rounds_used < config.max_rounds
        ):
            guess_box = turn.extra.get("fallback_box")
            if guess_box is not None and iou(BBox.from_payload(guess_box), target_box) >= 0.5:
                commands.append("yes")
                apply_command(state, "yes")
        current_error = classify_gaze_error(state.current_mask, scene, target_id)

    final_error = classify_gaze_error(state.current_mask, scene, target_id)
    final_correct = final_error is None

    disambiguation_error: Optional[DisambiguationErrorType] = None
    if not final_correct and commands:
        disambiguation_error = corruption or _attribute_failure(state, target_box)

    return TrialRecord(
        condition=condition.code,
        trial_index=trial_index,
        target_id=target_id,
        first_shot_correct=first_correct,
        final_correct=final_correct,
        rounds_used=state.rounds_used,
        gaze_error=gaze_error.value if gaze_error else None,
        disambiguation_error=disambiguation_error.value if disambiguation_error else None,
        commands=tuple(commands),
        seed=str(trial_seed),
        traces=tuple(traces),
    )


def _attribute_failure(state, target_box: BBox) -> DisambiguationErrorType:
    """Blame the last correction's failure on the stage that lost the target."""
    for turn in reversed(state.history):
        if turn.trace:
            present, filtered = _target_in_candidates(turn.trace, target_box)
            if not present:
                return DisambiguationErrorType.OBJECT_DETECTION
            if filtered:
                return DisambiguationErrorType.OBJECT_FILTERING
            return DisambiguationErrorType.OBJECT_LOCALIZATION
        if turn.kind is TurnKind.ERROR and turn.extra.get("error") == "unparseable":
            return DisambiguationErrorType.HUMAN_COMMAND
    return DisambiguationErrorType.OBJECT_DETECTION


# -- experiments -------------------------------------------------------------


@dataclass(frozen=True)
class ConditionMetrics:
    condition: str
    trials: int
    first_shot_accuracy: float
    final_accuracy: float
    mean_rounds: float
    gaze_error_histogram: dict
    disambiguation_error_histogram: dict

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "trials": self.trials,
            "first_shot_accuracy": self.first_shot_accuracy,
            "final_accuracy": self.final_accuracy,
            "mean_rounds": self.mean_rounds,
            "gaze_error_histogram": self.gaze_error_histogram,
            "disambiguation_error_histogram": self.disambiguation_error_histogram,
        }


@dataclass(frozen=True)
class MetricsReport:
    seed: str
    trials_per_condition: int
    noise: dict
    degradation: dict
    conditions: tuple[ConditionMetrics, ...]
    marginals: dict
    trials: tuple[TrialRecord, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "trials_per_condition": self.trials_per_condition,
            "noise": self.noise,
            "degradation": self.degradation,
            "precision_floor": 0.75,
            "conditions": [c.to_dict() for c in self.conditions],
            "marginals": self.marginals,
            "trials": [t.to_dict() for t in self.trials],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def condition_metrics(self, code: str) -> ConditionMetrics:
        for metrics in self.conditions:
            if metrics.condition == code:
                return metrics
        raise KeyError(code)


def _histogram(values: list[Optional[str]]) -> dict:
    out: dict[str, int] = {}
    for value in values:
        if value is not None:
            out[value] = out.get(value, 0) + 1
    return dict(sorted(out.items()))


def run_experiment(
    conditions: Sequence[TrialCondition],
    trials_per: int,
    noise: GazeNoiseModel,
    degradation: BackendDegradation,
    seed,
    config: SessionConfig = DEFAULT_SESSION_CONFIG,
    channels: CorruptionChannels = CorruptionChannels(),
) -> MetricsReport:
    """Batch trials per condition; byte-identical output for a fixed seed."""
    if trials_per < 1:
        raise ValueError("trials_per must be at least 1")
    all_trials: list[TrialRecord] = []
    per_condition: list[ConditionMetrics] = []
    for condition in conditions:
        records = [
            run_trial(
                condition,
                trial_seed=f"{seed}|{condition.code}|{i}",
                trial_index=i,
                noise=noise,
                degradation=degradation,
                config=config,
                channels=channels,
            )
            for i in range(trials_per)
        ]
        all_trials.extend(records)
        per_condition.append(
            ConditionMetrics(
                condition=condition.code,
                trials=len(records),
                first_shot_accuracy=sum(r.first_shot_correct for r in records) / len(records),
                final_accuracy=sum(r.final_correct for r in records) / len(records),
                mean_rounds=sum(r.rounds_used for r in records) / len(records),
                gaze_error_histogram=_histogram([r.gaze_error for r in records]),
                disambiguation_error_histogram=_histogram(
                    [r.disambiguation_error for r in records]
                ),
            )
        )

    def marginal(predicate) -> float:
        rows = [
            m.first_shot_accuracy
            for m, c in zip(per_condition, conditions)
            if predicate(c)
        ]
        return sum(rows) / len(rows) if rows else float("nan")

    marginals = {
        "first_shot_by_size": {
            "small": marginal(lambda c: c.size is PerceivedSize.SMALL),
            "normal": marginal(lambda c: c.size is PerceivedSize.NORMAL),
        },
        "first_shot_by_clutter": {
            "cluttered": marginal(lambda c: c.clutter is Clutter.CLUTTERED),
            "clean": marginal(lambda c: c.clutter is Clutter.CLEAN),
        },
    }
    from dataclasses import asdict

    return MetricsReport(
        seed=str(seed),
        trials_per_condition=trials_per,
        noise=asdict(noise),
        degradation=asdict(degradation),
        conditions=tuple(per_condition),
        marginals=marginals,
        trials=tuple(all_trials),
    )
