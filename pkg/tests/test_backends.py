from __future__ import annotations

import threading

import numpy as np
import pytest

from gazeref.backends import (
    BackendDegradation,
    BackendError,
    BackendUnavailable,
    BackendDispatcher,
    HttpTransport,
    LoopbackTransport,
    MalformedResponse,
    OracleBackend,
    ProtocolError,
    ScenePatch,
    SegmentationResult,
    WireBackend,
    serve_http,
)
from gazeref.describe import build_context_region
from gazeref.geometry import BBox, GeometryError, Mask, mask_to_tight_box
from gazeref.parsing import ObjectDescriptor, RelationKind

from conftest import build_scene


def center_of(scene, object_id):
    cx, cy = scene.tight_box(object_id).center()
    return (int(cx), int(cy))


# -- point segmentation ----------------------------------------------------------


def test_point_on_plain_object_prefers_object_granularity(three_object_scene):
    backend = OracleBackend(three_object_scene)
    result = backend.segment_point(center_of(three_object_scene, 1))
    mask, confidence = result.best()
    assert confidence == 0.9
    assert mask == three_object_scene.visible_mask(1)
    assert result.confidences == (0.7, 0.9, 0.6)


def test_point_on_salient_part_wins(part_scene):
    backend = OracleBackend(part_scene)
    result = backend.segment_point((100, 110))
    mask, confidence = result.best()
    assert confidence == 0.95
    assert mask == part_scene.part_mask(1, "cap")


def test_point_on_non_salient_part_still_returns_object(part_scene):
    backend = OracleBackend(part_scene)
    result = backend.segment_point((100, 140))  # body part, not salient
    mask, confidence = result.best()
    assert confidence == 0.9
    assert mask == part_scene.visible_mask(1)


def test_point_on_background_floods_background(three_object_scene):
    backend = OracleBackend(three_object_scene)
    result = backend.segment_point((200, 200))
    mask, confidence = result.best()
    assert confidence == 0.5
    assert mask.contains_point(200, 200)
    assert not mask.contains_point(*center_of(three_object_scene, 1))


def test_point_off_canvas_errors(three_object_scene):
    backend = OracleBackend(three_object_scene)
    with pytest.raises(GeometryError):
        backend.segment_point((-1, 5))


def test_group_granularity_unions_adjacent():
    scene = build_scene(
        "adjacent",
        [
            {"category": "cup", "color": "red", "rect": (50, 50, 90, 90)},
            {"category": "book", "color": "blue", "rect": (94, 50, 140, 90)},
            {"category": "vase", "color": "white", "rect": (200, 200, 230, 230)},
        ],
    )
    backend = OracleBackend(scene)
    result = backend.segment_point((70, 70))
    group = result.masks[2]
    assert group.contains_point(100, 70)      # adjacent book joins the group
    assert not group.contains_point(210, 210)  # distant vase does not


# -- box segmentation --------------------------------------------------------------


def test_segment_box_returns_best_overlap_mask(three_object_scene):
    backend = OracleBackend(three_object_scene)
    box = three_object_scene.tight_box(2)
    assert backend.segment_box(box) == three_object_scene.visible_mask(2)


def test_segment_box_no_overlap_errors(three_object_scene):
    backend = OracleBackend(three_object_scene)
    with pytest.raises(BackendError):
        backend.segment_box(BBox(200, 200, 230, 230))


# -- global segmentation and detection ----------------------------------------------


def test_segment_everything_covers_all_objects(three_object_scene):
    backend = OracleBackend(three_object_scene)
    masks = backend.segment_everything()
    tight = {mask_to_tight_box(m) for m in masks}
    for obj in three_object_scene.objects:
        assert three_object_scene.tight_box(obj.id) in tight


def test_segment_everything_includes_salient_parts(part_scene):
    backend = OracleBackend(part_scene)
    masks = backend.segment_everything()
    assert part_scene.part_mask(1, "cap") in masks


def test_min_detectable_area_drops_small_objects():
    scene = build_scene(
        "tiny",
        [
            {"category": "cup", "color": "red", "rect": (10, 10, 15, 18)},  # 40 px
            {"category": "book", "color": "blue", "rect": (100, 100, 160, 160)},
        ],
    )
    degraded = OracleBackend(scene, BackendDegradation(min_detectable_area=100))
    masks = degraded.segment_everything()
    assert len(masks) == 1
    assert mask_to_tight_box(masks[0]) == scene.tight_box(2)
    labels = [d.label for d in degraded.detect()]
    assert labels == ["book"]


def test_detect_returns_labeled_boxes(three_object_scene):
    backend = OracleBackend(three_object_scene)
    detections = {d.label: d.box for d in backend.detect()}
    assert detections["cup"] == three_object_scene.tight_box(1)
    assert detections["album"] == three_object_scene.tight_box(2)


def test_degradation_is_deterministic(three_object_scene):
    degradation = BackendDegradation(detect_miss_rate=0.5, seed=9)
    a = OracleBackend(three_object_scene, degradation).segment_everything()
    b = OracleBackend(three_object_scene, degradation).segment_everything()
    assert a == b
    # a different seed may change the outcome but stays self-consistent
    c = OracleBackend(three_object_scene, BackendDegradation(detect_miss_rate=0.5, seed=10))
    assert c.segment_everything() == c.segment_everything()


def test_zero_degradation_complete_and_tight(three_object_scene):
    backend = OracleBackend(three_object_scene)
    masks = backend.segment_everything()
    object_masks = [m for m in masks]
    assert len(object_masks) == len(three_object_scene.objects)
    for mask in object_masks:
        assert mask.area() > 0


# -- noisy box judging ----------------------------------------------------------------


def test_judge_object_tight_box_not_noisy(three_object_scene):
    backend = OracleBackend(three_object_scene)
    assert backend.judge_noisy(ScenePatch(three_object_scene.tight_box(1))) is False


def test_judge_background_box_noisy(three_object_scene):
    backend = OracleBackend(three_object_scene)
    assert backend.judge_noisy(ScenePatch(BBox(190, 190, 235, 235))) is True


def test_judge_box_straddling_two_objects_noisy():
    scene = build_scene(
        "straddle",
        [
            {"category": "cup", "color": "red", "rect": (20, 20, 60, 100)},
            {"category": "book", "color": "blue", "rect": (60, 20, 100, 100)},
        ],
    )
    backend = OracleBackend(scene)
    # covers both objects about 40%/40%
    assert backend.judge_noisy(ScenePatch(BBox(30, 30, 90, 90))) is True


def test_judge_small_fragment_noisy(part_scene):
    backend = OracleBackend(part_scene)
    fragment = BBox(60, 60, 75, 75)  # corner sliver of the marker
    assert backend.judge_noisy(ScenePatch(fragment)) is True


# -- patch scoring -----------------------------------------------------------------------


def descriptor(identity, *adjectives):
    return ObjectDescriptor(identity, tuple(adjectives))


def test_score_full_match(three_object_scene):
    backend = OracleBackend(three_object_scene)
    score, rationale = backend.score_patch(
        ScenePatch(three_object_scene.tight_box(1)), descriptor("cup", "red")
    )
    assert score == 1.0
    assert "2/2" in rationale


def test_score_color_mismatch_half(three_object_scene):
    backend = OracleBackend(three_object_scene)
    score, _ = backend.score_patch(
        ScenePatch(three_object_scene.tight_box(1)), descriptor("cup", "blue")
    )
    assert score == 0.5


def test_score_background_zero(three_object_scene):
    backend = OracleBackend(three_object_scene)
    score, rationale = backend.score_patch(
        ScenePatch(BBox(190, 190, 230, 230)), descriptor("cup", "red")
    )
    assert score == 0.0
    assert "background" in rationale


def test_score_identity_synonyms(row_scene):
    backend = OracleBackend(row_scene)
    patch = ScenePatch(row_scene.tight_box(1))
    assert backend.score_patch(patch, descriptor("can"))[0] == 1.0
    assert backend.score_patch(patch, descriptor("beverage can"))[0] == 1.0
    assert backend.score_patch(patch, descriptor("cans"))[0] == 1.0


def test_score_monotone_in_matching_attributes(three_object_scene):
    backend = OracleBackend(three_object_scene)
    patch = ScenePatch(three_object_scene.tight_box(1))
    base = backend.score_patch(patch, descriptor("cup"))[0]
    with_match = backend.score_patch(patch, descriptor("cup", "red"))[0]
    with_miss = backend.score_patch(patch, descriptor("cup", "blue"))[0]
    assert with_match >= base
    assert with_miss <= base


def test_scorer_noise_is_seed_deterministic(three_object_scene):
    degradation = BackendDegradation(scorer_noise=0.2, seed=5)
    backend = OracleBackend(three_object_scene, degradation)
    patch = ScenePatch(three_object_scene.tight_box(1))
    first = backend.score_patch(patch, descriptor("cup", "red"))
    second = backend.score_patch(patch, descriptor("cup", "red"))
    assert first == second
    assert 0.0 <= first[0] <= 1.0


# -- language capabilities -----------------------------------------------------------------


def test_describe_free_delegates(three_object_scene):
    backend = OracleBackend(three_object_scene)
    mask = three_object_scene.visible_mask(1)
    context = build_context_region(240, 240, mask, (50.0, 120.0), 150)
    description = backend.describe_free(mask, context)
    assert description.identity == "cup"


def test_interpret_command_parses_and_resolves(three_object_scene):
    backend = OracleBackend(three_object_scene)
    command = backend.interpret_command("select the red cup", ())
    assert command.target.identity == "cup"
    assert command.relation.kind is RelationKind.NEXT_TO


# -- segmentation result invariants ------------------------------------------------------------


def test_segmentation_result_requires_three_masks():
    mask = Mask(4, 4, ())
    with pytest.raises(MalformedResponse):
        SegmentationResult(masks=(mask, mask), confidences=(0.5, 0.5))  # type: ignore[arg-type]


# -- wire protocol -----------------------------------------------------------------------------


@pytest.fixture
def loopback(three_object_scene):
    oracle = OracleBackend(three_object_scene)
    return WireBackend(LoopbackTransport(BackendDispatcher(oracle))), oracle


CONTRACT_POINTS = [(50, 120), (200, 200)]


def test_wire_matches_oracle_segment_point(loopback, three_object_scene):
    wire, oracle = loopback
    for point in CONTRACT_POINTS:
        via_wire = wire.segment_point(point)
        direct = oracle.segment_point(point)
        assert via_wire.masks == direct.masks
        assert via_wire.confidences == direct.confidences


def test_wire_matches_oracle_everything_and_detect(loopback, three_object_scene):
    wire, oracle = loopback
    assert wire.segment_everything() == oracle.segment_everything()
    assert wire.detect() == oracle.detect()


def test_wire_matches_oracle_judge_score(loopback, three_object_scene):
    wire, oracle = loopback
    patch = ScenePatch(three_object_scene.tight_box(1))
    assert wire.judge_noisy(patch) == oracle.judge_noisy(patch)
    assert wire.score_patch(patch, descriptor("cup", "red")) == oracle.score_patch(
        patch, descriptor("cup", "red")
    )


def test_wire_matches_oracle_language(loopback, three_object_scene):
    wire, oracle = loopback
    mask = three_object_scene.visible_mask(1)
    context = build_context_region(240, 240, mask, (50.0, 120.0), 150)
    assert wire.describe_free(mask, context).full_text == oracle.describe_free(mask, context).full_text
    assert wire.interpret_command("the red cup", ()) == oracle.interpret_command("the red cup", ())


def test_wire_segment_box(loopback, three_object_scene):
    wire, oracle = loopback
    box = three_object_scene.tight_box(2)
    assert wire.segment_box(box) == oracle.segment_box(box)


def test_unknown_capability_is_protocol_error(three_object_scene):
    dispatcher = BackendDispatcher(OracleBackend(three_object_scene))
    response = dispatcher.handle(
        {"capability": "segment_galaxy", "request_id": "r1", "payload": {}}
    )
    assert response["ok"] is False
    assert response["error"]["kind"] == "protocol"


def test_wrong_mask_count_is_malformed(three_object_scene):
    def two_mask_transport(request):
        return {
            "request_id": request["request_id"],
            "ok": True,
            "payload": {
                "masks": [Mask(4, 4, ()).to_payload()] * 2,
                "confidences": [0.5, 0.5],
            },
        }

    wire = WireBackend(two_mask_transport)
    with pytest.raises(MalformedResponse):
        wire.segment_point((1, 1))


def test_mismatched_request_id_is_protocol_error():
    def bad_id_transport(request):
        return {"request_id": "someone-else", "ok": True, "payload": {}}

    wire = WireBackend(bad_id_transport)
    with pytest.raises(ProtocolError):
        wire.segment_everything()


def test_transport_failure_is_backend_unavailable():
    def broken_transport(request):
        raise BackendUnavailable("socket closed")

    wire = WireBackend(broken_transport)
    with pytest.raises(BackendUnavailable):
        wire.detect()


def test_http_transport_round_trip(three_object_scene):
    dispatcher = BackendDispatcher(OracleBackend(three_object_scene))
    server = serve_http(dispatcher, "127.0.0.1", 0)
    try:
        port = server.server_address[1]
        wire = WireBackend(HttpTransport(f"http://127.0.0.1:{port}/", timeout=5.0))
        result = wire.segment_point((50, 120))
        assert result.best()[1] == 0.9
        assert wire.judge_noisy(ScenePatch(BBox(190, 190, 235, 235))) is True
    finally:
        server.shutdown()


def test_http_transport_unreachable_is_unavailable():
    wire = WireBackend(HttpTransport("http://127.0.0.1:1/", timeout=0.2))
    with pytest.raises(BackendUnavailable):
        wire.detect()


def test_http_transport_per_capability_timeout():
    transport = HttpTransport(
        "http://127.0.0.1:1/", timeout=5.0, capability_timeouts={"detect": 7.5}
    )
    assert transport.capability_timeouts["detect"] == 7.5
    seen: dict[str, float] = {}

    class Recorder:
        def post(self, url, json=None, timeout=None):
            seen[json["capability"]] = timeout
            raise BackendUnavailable("stop here")

    transport._client = Recorder()
    wire = WireBackend(transport)
    with pytest.raises(BackendUnavailable):
        wire.detect()
    with pytest.raises(BackendUnavailable):
        wire.segment_everything()
    assert seen["detect"] == 7.5
    assert seen["segment_everything"] == 5.0


def test_degradation_validation():
    with pytest.raises(ValueError):
        BackendDegradation(detect_miss_rate=1.5)
    with pytest.raises(ValueError):
        BackendDegradation(min_detectable_area=-1)
