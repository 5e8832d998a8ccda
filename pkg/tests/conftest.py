from __future__ import annotations

import pytest

from gazeref.scene import Scene, SceneObject, ScenePart, rect_polygon


def build_scene(name: str, objects: list[dict], size: int = 240) -> Scene:
    built = []
    for i, spec in enumerate(objects):
        parts = tuple(
            ScenePart(p["name"], rect_polygon(*p["rect"]), p.get("salient", False))
            for p in spec.get("parts", ())
        )
        x0, y0, x1, y1 = spec["rect"]
        built.append(
            SceneObject(
                id=i + 1,
                category=spec["category"],
                color=spec["color"],
                polygon=rect_polygon(x0, y0, x1, y1),
                adjectives=tuple(spec.get("adjectives", ())),
                parts=parts,
            )
        )
    return Scene(name=name, width=size, height=size, objects=tuple(built))


@pytest.fixture
def three_object_scene() -> Scene:
    """A cup, a gold album and a bottle, all comfortably separated."""
    return build_scene(
        "three-objects",
        [
            {"category": "cup", "color": "red", "rect": (30, 90, 70, 150)},
            {"category": "album", "color": "gold", "rect": (100, 90, 160, 150)},
            {"category": "bottle", "color": "green", "rect": (30, 10, 60, 40)},
        ],
    )


@pytest.fixture
def row_scene() -> Scene:
    """Three identical beverage cans in a row plus one distinct anchor."""
    return build_scene(
        "can-row",
        [
            {"category": "beverage can", "color": "blue", "rect": (20, 100, 50, 150)},
            {"category": "beverage can", "color": "blue", "rect": (70, 100, 100, 150)},
            {"category": "beverage can", "color": "blue", "rect": (120, 100, 150, 150)},
            {"category": "book", "color": "brown", "rect": (80, 20, 150, 60)},
        ],
    )


@pytest.fixture
def part_scene() -> Scene:
    """A marker with a salient cap band across its center."""
    return build_scene(
        "marker-with-cap",
        [
            {
                "category": "marker",
                "color": "purple",
                "rect": (60, 60, 160, 160),
                "parts": [
                    {"name": "cap", "rect": (60, 95, 160, 125), "salient": True},
                    {"name": "body", "rect": (60, 125, 160, 160)},
                ],
            },
            {"category": "vase", "color": "white", "rect": (180, 60, 220, 160)},
        ],
    )
