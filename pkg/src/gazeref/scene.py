"""Ground-truth synthetic scenes: labeled, attributed, part-structured regions.

A scene is a z-ordered list of polygonal objects on a raster canvas.  Objects
drawn later occlude earlier ones, so each object has both a full footprint and
a visible mask.  The rasterized label map drives every oracle backend and the
error classification, which keeps the whole pipeline verifiable against a
single source of truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .geometry import BBox, GeometryError, Mask

Point = tuple[float, float]

# Named colors available to scene objects and to the description vocabulary.
NAMED_COLORS: dict[str, tuple[int, int, int]] = {
    "red": (203, 54, 48),
    "orange": (233, 131, 38),
    "yellow": (238, 210, 71),
    "green": (69, 158, 80),
    "blue": (52, 108, 204),
    "purple": (126, 70, 180),
    "pink": (231, 128, 171),
    "brown": (134, 92, 56),
    "black": (38, 38, 38),
    "white": (245, 245, 245),
    "gray": (128, 128, 128),
    "gold": (208, 170, 64),
}

BACKGROUND_COLOR: tuple[int, int, int] = (224, 221, 214)

# Object catalog for generated scenes: category, allowed colors, extra
# adjectives, and part names for structurally complex instances.
CATALOG: tuple[dict, ...] = (
    {"category": "cup", "colors": ("white", "red", "blue", "black"), "adjectives": ("ceramic",)},
    {"category": "beverage can", "colors": ("blue", "red", "green", "gray"), "adjectives": ("metal",)},
    {"category": "bottle", "colors": ("green", "brown", "blue"), "adjectives": ("glass",), "parts": ("cap", "label", "body")},
    {"category": "pumpkin", "colors": ("orange",), "adjectives": ("round",)},
    {"category": "marker", "colors": ("purple", "red", "black", "green"), "adjectives": ("plastic",), "parts": ("cap", "body")},
    {"category": "apple", "colors": ("red", "green"), "adjectives": ("round",)},
    {"category": "album", "colors": ("gold", "black"), "adjectives": ("square",)},
    {"category": "snack bag", "colors": ("yellow", "orange", "pink"), "adjectives": ("paper",), "parts": ("logo", "body")},
    {"category": "book", "colors": ("brown", "blue", "gray"), "adjectives": ("paper",)},
    {"category": "mouse", "colors": ("black", "white"), "adjectives": ("plastic",)},
    {"category": "candle", "colors": ("orange", "white", "pink"), "adjectives": ("round",)},
    {"category": "vase", "colors": ("white", "blue"), "adjectives": ("glass",)},
    {"category": "poster", "colors": ("white", "yellow"), "adjectives": ("paper",)},
    {"category": "banana", "colors": ("yellow",), "adjectives": ()},
    {"category": "bear toy", "colors": ("brown", "pink"), "adjectives": ("plush",)},
    {"category": "headphones", "colors": ("black", "white"), "adjectives": ("plastic",)},
)

CATALOG_CATEGORIES: tuple[str, ...] = tuple(entry["category"] for entry in CATALOG)


def rasterize_polygon(vertices: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Even-odd scanline fill of a simple polygon onto a boolean canvas.

    Pixels are filled when their center (x + 0.5, y + 0.5) lies inside.
    """
    out = np.zeros((height, width), dtype=bool)
    n = len(vertices)
    if n < 3:
        return out
    ys = [v[1] for v in vertices]
    y_min = max(int(np.floor(min(ys))), 0)
    y_max = min(int(np.ceil(max(ys))), height)
    for row in range(y_min, y_max):
        yc = row + 0.5
        crossings: list[float] = []
        for i in range(n):
            x0, y0 = vertices[i]
            x1, y1 = vertices[(i + 1) % n]
            if (y0 <= yc < y1) or (y1 <= yc < y0):
                t = (yc - y0) / (y1 - y0)
                crossings.append(x0 + t * (x1 - x0))
        crossings.sort()
        for j in range(0, len(crossings) - 1, 2):
            left = int(np.ceil(crossings[j] - 0.5))
            right = int(np.ceil(crossings[j + 1] - 0.5))
            left = max(left, 0)
            right = min(right, width)
            if right > left:
                out[row, left:right] = True
    return out


def rect_polygon(x0: float, y0: float, x1: float, y1: float) -> tuple[Point, ...]:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


@dataclass(frozen=True)
class ScenePart:
    name: str
    polygon: tuple[Point, ...]
    salient: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "polygon": [[float(x), float(y)] for x, y in self.polygon],
            "salient": self.salient,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenePart":
        return cls(
            name=data["name"],
            polygon=tuple((float(x), float(y)) for x, y in data["polygon"]),
            salient=bool(data.get("salient", False)),
        )


@dataclass(frozen=True)
class SceneObject:
    id: int
    category: str
    color: str
    polygon: tuple[Point, ...]
    adjectives: tuple[str, ...] = ()
    parts: tuple[ScenePart, ...] = ()

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ValueError("object ids start at 1 (0 is background)")
        if self.color not in NAMED_COLORS:
            raise ValueError(f"unknown color {self.color!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "color": self.color,
            "polygon": [[float(x), float(y)] for x, y in self.polygon],
            "adjectives": list(self.adjectives),
            "parts": [p.to_dict() for p in self.parts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneObject":
        return cls(
            id=int(data["id"]),
            category=data["category"],
            color=data["color"],
            polygon=tuple((float(x), float(y)) for x, y in data["polygon"]),
            adjectives=tuple(data.get("adjectives", ())),
            parts=tuple(ScenePart.from_dict(p) for p in data.get("parts", ())),
        )


@dataclass(frozen=True)
class Scene:
    name: str
    width: int
    height: int
    objects: tuple[SceneObject, ...]
    pixels_per_degree: float = 12.0

    def __post_init__(self) -> None:
        seen = set()
        for obj in self.objects:
            if obj.id in seen:
                raise ValueError(f"duplicate object id {obj.id}")
            seen.add(obj.id)

    @cached_property
    def label_map(self) -> np.ndarray:
        """Per-pixel object id after z-order occlusion; 0 is background."""
        labels = np.zeros((self.height, self.width), dtype=np.int32)
        for obj in self.objects:
            footprint = rasterize_polygon(obj.polygon, self.width, self.height)
            labels[footprint] = obj.id
        labels.setflags(write=False)
        return labels

    @cached_property
    def background_components(self) -> np.ndarray:
        comps, _ = ndimage.label(self.label_map == 0)
        comps.setflags(write=False)
        return comps

    @cached_property
    def color_image(self) -> np.ndarray:
        img = np.empty((self.height, self.width, 3), dtype=np.uint8)
        img[:] = BACKGROUND_COLOR
        for obj in self.objects:
            img[self.label_map == obj.id] = NAMED_COLORS[obj.color]
        img.setflags(write=False)
        return img

    @cached_property
    def _mask_cache(self) -> dict:
        return {}

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object with id {object_id}")

    def visible_mask(self, object_id: int) -> Mask:
        key = ("object", object_id)
        if key not in self._mask_cache:
            self._mask_cache[key] = Mask.from_array(self.label_map == object_id)
        return self._mask_cache[key]

    def part_mask(self, object_id: int, part_name: str) -> Mask:
        key = ("part", object_id, part_name)
        if key in self._mask_cache:
            return self._mask_cache[key]
        obj = self.object_by_id(object_id)
        for part in obj.parts:
            if part.name == part_name:
                footprint = rasterize_polygon(part.polygon, self.width, self.height)
                mask = Mask.from_array(footprint & (self.label_map == object_id))
                self._mask_cache[key] = mask
                return mask
        raise KeyError(f"object {object_id} has no part {part_name!r}")

    def background_mask_at(self, x: int, y: int) -> Mask:
        """Connected background region under a point (error when on an object)."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise GeometryError(f"point ({x}, {y}) off canvas")
        label = int(self.background_components[y, x])
        if label == 0:
            raise GeometryError(f"point ({x}, {y}) is not on background")
        return Mask.from_array(self.background_components == label)

    def object_at(self, x: int, y: int) -> Optional[SceneObject]:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise GeometryError(f"point ({x}, {y}) off canvas")
        label = int(self.label_map[y, x])
        if label == 0:
            return None
        return self.object_by_id(label)

    def part_at(self, obj: SceneObject, x: int, y: int) -> Optional[ScenePart]:
        """Smallest part of ``obj`` whose visible region contains the point."""
        best: Optional[tuple[int, ScenePart]] = None
        for part in obj.parts:
            mask = self.part_mask(obj.id, part.name)
            if mask.contains_point(x, y):
                area = mask.area()
                if best is None or area < best[0]:
                    best = (area, part)
        return best[1] if best else None

    def color_at(self, x: int, y: int) -> tuple[int, int, int]:
        xi = min(max(int(x), 0), self.width - 1)
        yi = min(max(int(y), 0), self.height - 1)
        return tuple(int(c) for c in self.color_image[yi, xi])

    def tight_box(self, object_id: int) -> BBox:
        from .geometry import mask_to_tight_box

        key = ("tight", object_id)
        if key not in self._mask_cache:
            self._mask_cache[key] = mask_to_tight_box(self.visible_mask(object_id))
        return self._mask_cache[key]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "pixels_per_degree": self.pixels_per_degree,
            "objects": [obj.to_dict() for obj in self.objects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        return cls(
            name=data["name"],
            width=int(data["width"]),
            height=int(data["height"]),
            pixels_per_degree=float(data.get("pixels_per_degree", 12.0)),
            objects=tuple(SceneObject.from_dict(o) for o in data["objects"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))


def catalog_entry(category: str) -> dict:
    for entry in CATALOG:
        if entry["category"] == category:
            return entry
    raise KeyError(f"{category!r} not in catalog")
