"""Canonical selection descriptions and the context crop around a selection.

The description template is a documented contract:

    "I've selected [adjectives] [identity] [relation clause]."

with exactly one relation clause (ordinal, spatial, "between", or the
no-anchor clause "in the area you looked at") or none.  Fallback questions
wrap the same body as "Do you want to select [body]?".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .geometry import BBox, GeometryError, Mask, Side, mask_to_tight_box, side_of
from .parsing import NUMBER_WORD_BY_VALUE
from .scene import Scene, SceneObject

DESCRIPTION_PREFIX = "I've selected "
FALLBACK_PREFIX = "Do you want to select "
NO_ANCHOR_CLAUSE = "in the area you looked at"

_ORDINAL_WORDS = {1: "first", 2: "second", 3: "third", 4: "fourth", 5: "fifth",
                  6: "sixth", 7: "seventh", 8: "eighth", 9: "ninth", 10: "tenth"}


@dataclass(frozen=True)
class ContextRegion:
    box: BBox
    gaze_centroid: tuple[float, float]
    padding: int

    def to_payload(self) -> dict:
        return {
            "box": self.box.to_payload(),
            "gaze_centroid": list(self.gaze_centroid),
            "padding": self.padding,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "ContextRegion":
        return cls(
            box=BBox.from_payload(data["box"]),
            gaze_centroid=tuple(float(v) for v in data["gaze_centroid"]),
            padding=int(data["padding"]),
        )


@dataclass(frozen=True)
class Description:
    adjectives: tuple[str, ...]
    identity: str
    relation_clause: str
    part_of_parent: Optional[str] = None
    ordinal_group_size: Optional[int] = None
    ordinal_index: Optional[int] = None

    @property
    def body(self) -> str:
        if self.ordinal_group_size is not None:
            position = _position_word(self.ordinal_index or 0, self.ordinal_group_size)
            np_text = " ".join((*self.adjectives, self.identity))
            group = NUMBER_WORD_BY_VALUE.get(self.ordinal_group_size, str(self.ordinal_group_size))
            return f"the {position} {np_text} among the {group}"
        np_text = " ".join((*self.adjectives, self.identity))
        article = "an" if np_text[:1] in "aeiou" else "a"
        if self.relation_clause:
            return f"{article} {np_text} {self.relation_clause}"
        return f"{article} {np_text}"

    @property
    def full_text(self) -> str:
        return f"{DESCRIPTION_PREFIX}{self.body}."

    def to_payload(self) -> dict:
        return {
            "adjectives": list(self.adjectives),
            "identity": self.identity,
            "relation_clause": self.relation_clause,
            "part_of_parent": self.part_of_parent,
            "ordinal_group_size": self.ordinal_group_size,
            "ordinal_index": self.ordinal_index,
            "full_text": self.full_text,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "Description":
        return cls(
            adjectives=tuple(data.get("adjectives", ())),
            identity=data["identity"],
            relation_clause=data.get("relation_clause", ""),
            part_of_parent=data.get("part_of_parent"),
            ordinal_group_size=data.get("ordinal_group_size"),
            ordinal_index=data.get("ordinal_index"),
        )


def _position_word(index: int, size: int) -> str:
    if index == 0:
        return "leftmost"
    if index == size - 1:
        return "rightmost"
    if size % 2 == 1 and index == size // 2:
        return "middle"
    return _ORDINAL_WORDS.get(index + 1, f"{index + 1}th")


def build_context_region(
    frame_width: int,
    frame_height: int,
    mask: Mask,
    gaze_centroid: tuple[float, float],
    padding: int,
) -> ContextRegion:
    """Mask tight box expanded by the padding on all sides, clamped to frame."""
    if mask.is_empty():
        raise GeometryError("context region of an empty mask")
    box = mask_to_tight_box(mask).expand(padding).clamp(frame_width, frame_height)
    return ContextRegion(box=box, gaze_centroid=gaze_centroid, padding=padding)


def _mask_iou(a: Mask, b: Mask) -> float:
    inter = a.intersection_area(b)
    if inter == 0:
        return 0.0
    return inter / float(a.area() + b.area() - inter)


def _best_matching_element(
    scene: Scene, mask: Mask
) -> tuple[Optional[SceneObject], Optional[str], float]:
    """Scene object (and part name, when a part fits better) under the mask."""
    best_obj: Optional[SceneObject] = None
    best_part: Optional[str] = None
    best_iou = 0.0
    for obj in scene.objects:
        visible = scene.visible_mask(obj.id)
        if visible.is_empty():
            continue
        score = _mask_iou(mask, visible)
        if score > best_iou:
            best_obj, best_part, best_iou = obj, None, score
        for part in obj.parts:
            part_mask = scene.part_mask(obj.id, part.name)
            if part_mask.is_empty():
                continue
            part_score = _mask_iou(mask, part_mask)
            if part_score > best_iou:
                best_obj, best_part, best_iou = obj, part.name, part_score
    return best_obj, best_part, best_iou


def _context_objects(scene: Scene, context: ContextRegion) -> list[SceneObject]:
    out = []
    for obj in scene.objects:
        visible = scene.visible_mask(obj.id)
        if visible.is_empty():
            continue
        if scene.tight_box(obj.id).intersect(context.box) is not None:
            out.append(obj)
    return out


def _side_clause(scene: Scene, element: SceneObject, anchor: SceneObject, alpha: float) -> Optional[str]:
    """Spatial phrase for the dominant offset axis, validated against the
    side predicate so the sentence survives a parse -> filter round trip."""
    elem_box = scene.tight_box(element.id)
    anchor_box = scene.tight_box(anchor.id)
    ex, ey = elem_box.center()
    ax, ay = anchor_box.center()
    dx, dy = ex - ax, ey - ay
    horizontal = Side.LEFT if dx < 0 else Side.RIGHT
    vertical = Side.ABOVE if dy < 0 else Side.BELOW
    order = [horizontal, vertical] if abs(dx) >= abs(dy) else [vertical, horizontal]
    anchor_text = f"the {anchor.color} {anchor.category}"
    for side in order:
        if side_of(elem_box, anchor_box, side, alpha):
            return {
                Side.LEFT: f"to the left of {anchor_text}",
                Side.RIGHT: f"to the right of {anchor_text}",
                Side.ABOVE: f"above {anchor_text}",
                Side.BELOW: f"below {anchor_text}",
            }[side]
    return None


def _pluralize(noun: str) -> str:
    return noun + "s"


def describe_selection(
    scene: Scene,
    mask: Mask,
    context: ContextRegion,
    side_alpha: float = 0.5,
) -> Description:
    """Describe the scene element best matching the mask within its context."""
    element, part_name, overlap = _best_matching_element(scene, mask)
    if element is None or overlap == 0.0:
        return Description(adjectives=(), identity="background area", relation_clause="")

    if part_name is not None:
        identity = f"{part_name} of a {element.category}"
        adjectives: tuple[str, ...] = ()
    else:
        identity = element.category
        adjectives = (element.color,)

    in_context = _context_objects(scene, context)
    siblings = [
        obj for obj in in_context
        if obj.id != element.id and obj.category == element.category
    ]

    if part_name is None and len(siblings) >= 2:
        group = sorted(
            [element, *siblings], key=lambda o: scene.tight_box(o.id).center()[0]
        )
        index = next(i for i, obj in enumerate(group) if obj.id == element.id)
        return Description(
            adjectives=adjectives,
            identity=identity,
            relation_clause="",
            ordinal_group_size=len(group),
            ordinal_index=index,
        )

    # one same-category twin of the same color: add a distinguishing adjective
    if part_name is None:
        twins = [o for o in siblings if o.color == element.color]
        if twins and element.adjectives:
            for adjective in element.adjectives:
                if all(adjective not in t.adjectives for t in twins):
                    adjectives = (*adjectives, adjective)
                    break

    # anchors sharing the element's color would make the sentence ambiguous
    # on the way back through the parser and scorer; skip them
    anchors = [
        obj for obj in in_context
        if obj.id != element.id
        and obj.category != element.category
        and obj.color != element.color
    ]
    elem_center = scene.tight_box(element.id).center()
    anchors.sort(
        key=lambda o: (
            (scene.tight_box(o.id).center()[0] - elem_center[0]) ** 2
            + (scene.tight_box(o.id).center()[1] - elem_center[1]) ** 2
        )
    )

    clause = ""
    if len(anchors) >= 2 and anchors[0].category == anchors[1].category:
        a, b = anchors[0], anchors[1]
        ax = scene.tight_box(a.id).center()[0]
        bx = scene.tight_box(b.id).center()[0]
        da = abs(ax - elem_center[0]) + abs(scene.tight_box(a.id).center()[1] - elem_center[1])
        db = abs(bx - elem_center[0]) + abs(scene.tight_box(b.id).center()[1] - elem_center[1])
        flanking = (ax - elem_center[0]) * (bx - elem_center[0]) < 0
        comparable = max(da, db) <= 1.5 * max(min(da, db), 1.0)
        if flanking and comparable:
            clause = f"between two {_pluralize(a.category)}"
    if not clause and anchors:
        clause = _side_clause(scene, element, anchors[0], side_alpha) or ""
    if not clause:
        clause = NO_ANCHOR_CLAUSE

    return Description(
        adjectives=adjectives,
        identity=identity,
        relation_clause=clause,
        part_of_parent=element.category if part_name else None,
    )


def render_fallback_query(description: Description) -> str:
    return f"{FALLBACK_PREFIX}{description.body}?"
