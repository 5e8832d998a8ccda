"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.  Everything here runs on oracle backends only; no external
sidecar and no frontend are involved.
"""
from __future__ import annotations

import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from gazeref.backends import BackendDegradation, OracleBackend
from gazeref.config import DEFAULT_SESSION_CONFIG, PipelineConfig, SamplerConfig, SessionConfig
from gazeref.corpus import default_corpus_path, run_corpus
from gazeref.describe import build_context_region
from gazeref.dialog import TurnKind
from gazeref.disambiguate import collect_candidates, localize
from gazeref.gaze import GazeSample, cluster_labels, feature_vectors, sample_prompt
from gazeref.geometry import (
    BBox,
    CandidateBox,
    CandidateSource,
    Mask,
    Side,
    coverage,
    iou,
    mask_to_tight_box,
    nms,
    side_of,
)
from gazeref.parsing import parse
from gazeref.scene import Scene
from gazeref.session import apply_command, dump_log, gaze_select, replay_log, start_session
from gazeref.simulate import (
    ALL_CONDITIONS,
    CALIBRATED_NOISE,
    CONDITION_BY_CODE,
    ZERO_NOISE,
    Ambiguity,
    classify_gaze_error,
    generate_unambiguous_scene,
    run_experiment,
    simulate_gaze,
)


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.perf_counter()
    failed = None
    try:
        yield
    except BaseException as exc:
        failed = exc
        raise
    finally:
        elapsed = time.perf_counter() - start
        status = "FAIL" if failed else "PASS"
        print(f"[{status}] {name} ({elapsed:.1f}s, budget {budget_seconds:.0f}s)")
        if failed is None:
            assert elapsed < budget_seconds, f"{name} exceeded its {budget_seconds}s budget"


# -- 1. constants fidelity ---------------------------------------------------------


def test_constants_fidelity():
    with criterion("constants fidelity", 5):
        sampler = SamplerConfig()
        pipeline = PipelineConfig()
        session = SessionConfig()
        assert sampler.window_delta == 0.5
        assert sampler.sample_rate_hz == 90.0
        assert pipeline.context_padding == 150
        assert pipeline.side_overlap_alpha == 0.5
        assert pipeline.keep_n == 7
        assert pipeline.localization_threshold == 0.5
        assert session.max_rounds == 2
        assert DEFAULT_SESSION_CONFIG.sampler == sampler
        assert DEFAULT_SESSION_CONFIG.pipeline == pipeline


# -- 2. geometry oracle suite -------------------------------------------------------


def _box_pixels(box: BBox) -> set:
    return {(x, y) for x in range(box.x0, box.x1) for y in range(box.y0, box.y1)}


def _random_box(rng: random.Random, size: int = 24) -> BBox:
    x0 = rng.randrange(0, size - 1)
    y0 = rng.randrange(0, size - 1)
    return BBox(x0, y0, rng.randrange(x0 + 1, size + 1), rng.randrange(y0 + 1, size + 1))


def test_geometry_oracles():
    rng = random.Random(2024)
    with criterion("geometry oracle suite (5 ops x >=1000 instances)", 10):
        for _ in range(1000):  # iou
            a, b = _random_box(rng), _random_box(rng)
            pa, pb = _box_pixels(a), _box_pixels(b)
            expected = len(pa & pb) / len(pa | pb) if pa and pb else 0.0
            assert iou(a, b) == pytest.approx(expected, abs=1e-12)

        for _ in range(1000):  # coverage, exact pixel counts
            arr_a = np.random.RandomState(rng.randrange(1 << 30)).rand(12, 12) < 0.4
            arr_b = np.random.RandomState(rng.randrange(1 << 30)).rand(12, 12) < 0.4
            mask_a, mask_b = Mask.from_array(arr_a), Mask.from_array(arr_b)
            inter = int((arr_a & arr_b).sum())
            expected = inter / int(arr_b.sum()) if arr_b.sum() else 0.0
            assert coverage(mask_a, mask_b) == pytest.approx(expected, abs=1e-12)
            assert mask_a.intersection_area(mask_b) == inter

        for _ in range(1000):  # tight box via scan
            arr = np.random.RandomState(rng.randrange(1 << 30)).rand(10, 14) < 0.3
            if not arr.any():
                continue
            ys, xs = np.where(arr)
            expected_box = BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
            assert mask_to_tight_box(Mask.from_array(arr)) == expected_box

        for _ in range(1000):  # side predicate via margin enumeration
            candidate, reference = _random_box(rng), _random_box(rng)
            side = rng.choice(list(Side))
            alpha = rng.choice((0.0, 0.25, 0.5, 0.75, 1.0))
            if side in (Side.LEFT, Side.RIGHT):
                span = range(candidate.x0, candidate.x1)
                ref_len = reference.x1 - reference.x0
                if side is Side.LEFT:
                    complete = all(v < reference.x0 for v in span)
                    margin = sum(1 for v in span if v >= reference.x0)
                    overlapping = candidate.x0 < reference.x0
                else:
                    complete = all(v >= reference.x1 for v in span)
                    margin = sum(1 for v in span if v < reference.x1)
                    overlapping = candidate.x1 > reference.x1
            else:
                span = range(candidate.y0, candidate.y1)
                ref_len = reference.y1 - reference.y0
                if side is Side.ABOVE:
                    complete = all(v < reference.y0 for v in span)
                    margin = sum(1 for v in span if v >= reference.y0)
                    overlapping = candidate.y0 < reference.y0
                else:
                    complete = all(v >= reference.y1 for v in span)
                    margin = sum(1 for v in span if v < reference.y1)
                    overlapping = candidate.y1 > reference.y1
            expected = complete or (overlapping and margin / ref_len < alpha)
            assert side_of(candidate, reference, side, alpha) == expected

        for _ in range(1000):  # greedy NMS against a pixel-IoU reimplementation
            candidates = []
            for cid in range(rng.randrange(1, 7)):
                box = _random_box(rng)
                if rng.random() < 0.5:
                    arr = np.zeros((24, 24), dtype=bool)
                    arr[box.y0 : box.y1, box.x0 : box.x1] = True
                    candidates.append(
                        CandidateBox(box, CandidateSource.GLOBAL_SEG, cid, Mask.from_array(arr))
                    )
                else:
                    candidates.append(CandidateBox(box, CandidateSource.DETECTOR, cid))
            threshold = rng.choice((0.3, 0.5, 0.8))

            def prio(c):
                return (0 if c.source is CandidateSource.GLOBAL_SEG else 1,
                        -len(_box_pixels(c.box)), c.id)

            kept = []
            for cand in sorted(candidates, key=prio):
                pc = _box_pixels(cand.box)
                ok = True
                for k in kept:
                    pk = _box_pixels(k.box)
                    overlap = len(pc & pk) / len(pc | pk) if pc and pk else 0.0
                    if overlap > threshold:
                        ok = False
                        break
                if ok:
                    kept.append(cand)
            assert [c.id for c in nms(candidates, threshold)] == [c.id for c in kept]


# -- 3. gaze sampler ------------------------------------------------------------------


def _cluster_oracle(vectors: np.ndarray, config: SamplerConfig) -> list[frozenset]:
    """Brute-force connected components over core points, borders attached."""
    n = len(vectors)
    gram = vectors @ vectors.T
    norms = np.diag(gram)
    dist_sq = np.maximum(norms[:, None] + norms[None, :] - 2 * gram, 0.0)
    adjacency = np.sqrt(dist_sq) <= config.neighborhood_radius + 1e-12
    strict = np.linalg.norm(vectors[:, None, :] - vectors[None, :, :], axis=2)
    adjacency = strict <= config.neighborhood_radius
    core = adjacency.sum(axis=1) >= config.min_cluster_size
    unvisited = set(int(i) for i in np.flatnonzero(core))
    clusters: list[set[int]] = []
    while unvisited:
        seed = min(unvisited)
        component = {seed}
        frontier = [seed]
        unvisited.discard(seed)
        while frontier:
            node = frontier.pop()
            for neighbor in np.flatnonzero(adjacency[node] & core):
                neighbor = int(neighbor)
                if neighbor in unvisited:
                    unvisited.discard(neighbor)
                    component.add(neighbor)
                    frontier.append(neighbor)
        clusters.append(component)
    for i in range(n):
        if core[i]:
            continue
        reachable = [int(j) for j in np.flatnonzero(adjacency[i]) if core[j]]
        if not reachable:
            continue
        nearest = min(reachable, key=lambda j: (strict[i, j], j))
        for cluster in clusters:
            if nearest in cluster:
                cluster.add(i)
                break
    return [frozenset(c) for c in clusters]


def test_gaze_sampler_acceptance():
    config = SamplerConfig()
    rng = random.Random(99)
    with criterion("gaze sampler clustering vs oracle + two-fixation", 5):
        for _ in range(500):
            n = rng.randrange(10, 201)
            centers = [
                (rng.uniform(0, 600), rng.uniform(0, 600))
                for _ in range(rng.randrange(1, 5))
            ]
            samples = []
            for i in range(n):
                cx, cy = rng.choice(centers)
                samples.append(
                    GazeSample(
                        t=i / 90.0,
                        x=cx + rng.uniform(-5, 5),
                        y=cy + rng.uniform(-5, 5),
                        depth=0.8,
                        color=(rng.randrange(3) * 100, 50, 50),
                    )
                )
            vectors = feature_vectors(samples, config)
            labels = cluster_labels(vectors, config)
            got: dict[int, set[int]] = {}
            for i, label in enumerate(labels):
                if label >= 0:
                    got.setdefault(int(label), set()).add(i)
            expected = _cluster_oracle(vectors, config)
            assert sorted(map(frozenset, got.values()), key=sorted) == sorted(
                expected, key=sorted
            )

        # the 63-vs-27 two-fixation window returns the larger cluster centroid
        a, b = (200.0, 300.0), (620.0, 120.0)
        stream = [
            GazeSample(t=i / 90.0, x=(a if i / 90.0 < 0.7 else b)[0],
                       y=(a if i / 90.0 < 0.7 else b)[1], depth=0.8)
            for i in range(90)
        ]
        split = sum(1 for s in stream if (s.x, s.y) == a)
        assert (split, 90 - split) == (63, 27)
        px, py = sample_prompt(stream, lambda x, y: (90, 90, 90), 0.5, config)
        assert abs(px - a[0]) <= 1.0 and abs(py - a[1]) <= 1.0


# -- 4. parser corpus ------------------------------------------------------------------


def test_parser_corpus_acceptance():
    with criterion("parser corpus (>=95%, relation sub-suite 100%)", 1):
        outcome = run_corpus(default_corpus_path())
        assert outcome.total == 60
        assert outcome.accuracy >= 0.95, outcome.failures
        assert outcome.relation_accuracy == 1.0, outcome.failures


# -- 5. ordinal localization -------------------------------------------------------------


def test_ordinal_localization_acceptance():
    from gazeref.scene import SceneObject, rect_polygon

    config = PipelineConfig()
    rng = random.Random(401)
    ordinal_words = ["first", "second", "third", "fourth", "fifth",
                     "sixth", "seventh", "eighth", "ninth", "tenth"]
    with criterion("ordinal localization vs brute-force center sort", 1):
        for k in range(2, 11):
            xs = sorted(rng.sample(range(0, 220, 4), k))
            objects = tuple(
                SceneObject(
                    id=i + 1, category="pumpkin", color="orange",
                    polygon=rect_polygon(x, 100, x + 12, 120),
                )
                for i, x in enumerate(xs)
            )
            scene = Scene(name=f"ord-{k}", width=260, height=260, objects=objects)
            backend = OracleBackend(scene)
            context = build_context_region(
                260, 260, scene.visible_mask(1), (float(xs[0] + 6), 110.0), 250
            )
            candidate_set, _ = collect_candidates(
                context, context.gaze_centroid, backend, config
            )
            ordered = sorted(candidate_set.candidates, key=lambda c: c.box.center()[0])

            cases = [("the leftmost pumpkin", 0), ("the rightmost pumpkin", k - 1),
                     ("the middle pumpkin", -(-k // 2) - 1)]
            cases += [(f"the {ordinal_words[n - 1]} pumpkin", n - 1) for n in range(1, k + 1)]
            for text, index in cases:
                result, _ = localize(
                    parse(text), candidate_set, None, backend, config, (260, 260)
                )
                assert result.is_selected, (text, k)
                assert result.selected_id == ordered[index].id, (text, k)


# -- 6. self-consistency --------------------------------------------------------------------


def test_self_consistency_acceptance():
    config = DEFAULT_SESSION_CONFIG
    rng = random.Random(777)
    with criterion("describe -> parse -> localize self-consistency (500 scenes)", 60):
        successes = 0
        total = 500
        for i in range(total):
            scene = generate_unambiguous_scene(f"consistency-{i}")
            target = rng.choice(scene.objects).id
            backend = OracleBackend(scene)
            state = start_session(scene, backend, config)
            stream = simulate_gaze(scene, target, ZERO_NOISE)
            turn = gaze_select(state, stream, select_time=0.5)
            assert turn.kind is TurnKind.DESCRIBE
            reply = apply_command(state, turn.text)
            if (
                reply.kind is TurnKind.DESCRIBE
                and classify_gaze_error(state.current_mask, scene, target) is None
            ):
                successes += 1
        assert successes >= 0.98 * total, f"{successes}/{total}"


# -- 7. perfect-oracle experiment --------------------------------------------------------------


def test_perfect_oracle_experiment():
    with criterion("perfect-oracle experiment (12 conditions x 50 trials)", 300):
        report = run_experiment(
            ALL_CONDITIONS, 50, ZERO_NOISE, BackendDegradation(), seed="acceptance-zero"
        )
        for metrics, condition in zip(report.conditions, ALL_CONDITIONS):
            assert metrics.final_accuracy == 1.0, (metrics.condition, metrics.final_accuracy)
            if condition.ambiguity is Ambiguity.STRUCTURAL:
                assert metrics.first_shot_accuracy == 0.0, metrics.condition
                assert metrics.gaze_error_histogram == {"part_of": 50}, metrics.condition
            else:
                assert metrics.first_shot_accuracy == 1.0, metrics.condition


# -- 8. directional replication ------------------------------------------------------------------


def test_directional_replication_under_noise():
    with criterion("directional replication + detection-error dominance", 900):
        report = run_experiment(
            ALL_CONDITIONS, 200, CALIBRATED_NOISE, BackendDegradation(),
            seed="acceptance-noise",
        )
        by_size = report.marginals["first_shot_by_size"]
        by_clutter = report.marginals["first_shot_by_clutter"]
        assert by_size["normal"] - by_size["small"] >= 0.05, by_size
        assert by_clutter["clean"] - by_clutter["cluttered"] >= 0.05, by_clutter

        small_conditions = [c for c in ALL_CONDITIONS if c.code.startswith("C") and int(c.code[1:]) <= 6]
        degraded = run_experiment(
            small_conditions, 200, CALIBRATED_NOISE,
            BackendDegradation(min_detectable_area=1600),
            seed="acceptance-degraded",
        )
        histogram: dict[str, int] = {}
        for metrics in degraded.conditions:
            for key, count in metrics.disambiguation_error_histogram.items():
                histogram[key] = histogram.get(key, 0) + count
        total_errors = sum(histogram.values())
        assert total_errors > 0
        assert histogram.get("object_detection", 0) > 0.5 * total_errors, histogram


# -- 9. determinism -----------------------------------------------------------------------------


def test_determinism_of_experiment_and_replay():
    with criterion("byte-identical reports and replays", 120):
        conditions = [CONDITION_BY_CODE["C6"], CONDITION_BY_CODE["C10"]]
        first = run_experiment(conditions, 5, CALIBRATED_NOISE, BackendDegradation(), seed="det")
        second = run_experiment(conditions, 5, CALIBRATED_NOISE, BackendDegradation(), seed="det")
        assert first.to_json().encode() == second.to_json().encode()

        from gazeref.simulate import generate_scene

        scene, target_id = generate_scene(CONDITION_BY_CODE["C10"], "acc-replay")
        backend = OracleBackend(scene)
        state = start_session(scene, backend, DEFAULT_SESSION_CONFIG)
        stream = simulate_gaze(scene, target_id, ZERO_NOISE)
        gaze_select(state, stream, 0.5)
        apply_command(state, f"select the whole {scene.object_by_id(target_id).category}")
        log_text = dump_log(state)
        assert dump_log(replay_log(log_text)) == log_text
        assert dump_log(replay_log(log_text)) == dump_log(replay_log(log_text))
