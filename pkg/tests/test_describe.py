from __future__ import annotations

import numpy as np
import pytest

from gazeref.describe import (
    DESCRIPTION_PREFIX,
    FALLBACK_PREFIX,
    NO_ANCHOR_CLAUSE,
    ContextRegion,
    Description,
    build_context_region,
    describe_selection,
    render_fallback_query,
)
from gazeref.geometry import BBox, GeometryError, Mask

from conftest import build_scene


def full_mask(scene, object_id):
    return scene.visible_mask(object_id)


# -- context region -------------------------------------------------------------


def test_context_region_expand_then_clamp():
    arr = np.zeros((1080, 1080), dtype=bool)
    arr[100:200, 100:200] = True
    region = build_context_region(1080, 1080, Mask.from_array(arr), (150.0, 150.0), 150)
    assert region.box == BBox(0, 0, 350, 350)
    assert region.padding == 150
    assert region.gaze_centroid == (150.0, 150.0)


def test_context_region_zero_padding_is_tight_box():
    arr = np.zeros((300, 300), dtype=bool)
    arr[50:80, 40:90] = True
    region = build_context_region(300, 300, Mask.from_array(arr), (60.0, 60.0), 0)
    assert region.box == BBox(40, 50, 90, 80)


def test_context_region_never_out_of_bounds():
    arr = np.zeros((200, 200), dtype=bool)
    arr[0:10, 190:200] = True
    region = build_context_region(200, 200, Mask.from_array(arr), (195.0, 5.0), 150)
    assert region.box.x0 >= 0 and region.box.y0 >= 0
    assert region.box.x1 <= 200 and region.box.y1 <= 200


def test_context_region_empty_mask_errors():
    with pytest.raises(GeometryError):
        build_context_region(100, 100, Mask(100, 100, ()), (0.0, 0.0), 10)


def context_for(scene, mask, padding=150):
    from gazeref.geometry import mask_to_tight_box

    center = mask_to_tight_box(mask).center()
    return build_context_region(scene.width, scene.height, mask, center, padding)


# -- descriptions ------------------------------------------------------------------


def test_template_prefix_and_shape(three_object_scene):
    mask = full_mask(three_object_scene, 1)
    description = describe_selection(three_object_scene, mask, context_for(three_object_scene, mask))
    assert description.full_text.startswith(DESCRIPTION_PREFIX)
    assert description.full_text.endswith(".")
    assert description.identity == "cup"
    assert "red" in description.adjectives


def test_spatial_clause_against_nearest_distinct_anchor(three_object_scene):
    mask = full_mask(three_object_scene, 1)
    description = describe_selection(three_object_scene, mask, context_for(three_object_scene, mask))
    # album sits to the right of the cup, so the cup is to its left
    assert description.relation_clause == "to the left of the gold album"
    assert description.full_text == "I've selected a red cup to the left of the gold album."


def test_ordinal_clause_for_sibling_row(row_scene):
    mask = full_mask(row_scene, 2)
    description = describe_selection(row_scene, mask, context_for(row_scene, mask))
    assert description.ordinal_group_size == 3
    assert description.ordinal_index == 1
    assert description.body == "the middle blue beverage can among the three"


def test_ordinal_index_matches_center_sort(row_scene):
    for object_id, word in ((1, "leftmost"), (2, "middle"), (3, "rightmost")):
        mask = full_mask(row_scene, object_id)
        description = describe_selection(row_scene, mask, context_for(row_scene, mask))
        assert word in description.body


def test_part_identity_carries_parent(part_scene):
    mask = part_scene.part_mask(1, "cap")
    description = describe_selection(part_scene, mask, context_for(part_scene, mask))
    assert description.identity == "cap of a marker"
    assert description.part_of_parent == "marker"
    assert description.full_text.startswith("I've selected a cap of a marker")


def test_background_mask_description_is_templated(three_object_scene):
    scene = three_object_scene
    mask = scene.background_mask_at(200, 200)
    description = describe_selection(scene, mask, context_for(scene, mask))
    assert description.identity == "background area"
    assert description.relation_clause == ""
    assert description.full_text == "I've selected a background area."


def test_between_emitted_for_flanking_same_category_anchors():
    scene = build_scene(
        "between",
        [
            {"category": "beverage can", "color": "blue", "rect": (100, 100, 130, 150)},
            {"category": "bottle", "color": "green", "rect": (40, 95, 70, 155)},
            {"category": "bottle", "color": "green", "rect": (160, 95, 190, 155)},
        ],
    )
    mask = full_mask(scene, 1)
    description = describe_selection(scene, mask, context_for(scene, mask))
    assert description.relation_clause == "between two bottles"
    assert description.full_text == "I've selected a blue beverage can between two bottles."


def test_no_anchor_clause_when_alone():
    scene = build_scene(
        "alone", [{"category": "cup", "color": "red", "rect": (100, 100, 140, 140)}], size=400
    )
    mask = full_mask(scene, 1)
    description = describe_selection(scene, mask, context_for(scene, mask, padding=20))
    assert description.relation_clause == NO_ANCHOR_CLAUSE


def test_same_color_anchor_is_skipped():
    scene = build_scene(
        "same-color",
        [
            {"category": "apple", "color": "red", "rect": (100, 100, 140, 140)},
            {"category": "cup", "color": "red", "rect": (160, 100, 200, 140)},
            {"category": "book", "color": "blue", "rect": (100, 180, 160, 220)},
        ],
    )
    mask = full_mask(scene, 1)
    description = describe_selection(scene, mask, context_for(scene, mask))
    assert "red cup" not in description.relation_clause
    assert "blue book" in description.relation_clause


# -- fallback query -------------------------------------------------------------------


def test_fallback_query_wraps_body(three_object_scene):
    mask = full_mask(three_object_scene, 1)
    description = describe_selection(three_object_scene, mask, context_for(three_object_scene, mask))
    text = render_fallback_query(description)
    assert text == "Do you want to select a red cup to the left of the gold album?"
    assert text.startswith(FALLBACK_PREFIX)


def test_fallback_query_background():
    description = Description(adjectives=(), identity="background area", relation_clause="")
    assert render_fallback_query(description) == "Do you want to select a background area?"


def test_no_double_spaces_without_adjectives():
    description = Description(adjectives=(), identity="cup", relation_clause="")
    assert "  " not in description.full_text
    assert description.full_text == "I've selected a cup."
