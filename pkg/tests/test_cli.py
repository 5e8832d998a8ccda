from __future__ import annotations

import json
from pathlib import Path

import pytest

from gazeref.cli import main


def run_cli(*argv) -> int:
    return main(list(argv))


def test_experiment_determinism(tmp_path, capsys):
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    common = [
        "experiment", "--conditions", "C6,C12", "--trials", "3",
        "--seed", "7", "--bias", "1.16", "--jitter", "0.22",
    ]
    assert run_cli(*common, "--out", str(out_a)) == 0
    assert run_cli(*common, "--out", str(out_b)) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    report = json.loads(out_a.read_text())
    assert {c["condition"] for c in report["conditions"]} == {"C6", "C12"}


def test_experiment_rejects_unknown_condition(capsys):
    assert run_cli("experiment", "--conditions", "C99", "--trials", "1") == 2
    err = capsys.readouterr().err
    assert json.loads(err)["error"]["kind"] == "bad_condition"


def test_scene_gen_validate_render(tmp_path, capsys):
    scene_path = tmp_path / "scene.json"
    assert run_cli("scene", "gen", "--condition", "C5", "--seed", "42", "--out", str(scene_path)) == 0
    document = json.loads(scene_path.read_text())
    assert document["target_id"] >= 1

    assert run_cli("scene", "validate", str(scene_path), "--condition", "C5") == 0
    out = capsys.readouterr().out
    assert json.loads(out.strip().splitlines()[-1])["violations"] == []

    # the same scene does not satisfy a different condition
    assert run_cli("scene", "validate", str(scene_path), "--condition", "C12") == 1
    err = capsys.readouterr().err
    assert json.loads(err)["violations"]

    png_path = tmp_path / "scene.png"
    assert run_cli("scene", "render", str(scene_path), "--out", str(png_path)) == 0
    assert png_path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_replay_round_trip(tmp_path):
    from gazeref.backends import OracleBackend
    from gazeref.config import DEFAULT_SESSION_CONFIG
    from gazeref.gaze import GazeSample
    from gazeref.session import apply_command, dump_log, gaze_select, start_session
    from gazeref.simulate import CONDITION_BY_CODE, generate_scene

    scene, target_id = generate_scene(CONDITION_BY_CODE["C10"], "replay-test")
    state = start_session(scene, OracleBackend(scene), DEFAULT_SESSION_CONFIG)
    cx, cy = scene.tight_box(target_id).center()
    stream = [GazeSample(t=i / 90.0, x=cx, y=cy, depth=0.8) for i in range(90)]
    gaze_select(state, stream, 0.5)
    apply_command(state, f"select the whole {scene.object_by_id(target_id).category}")

    log_path = tmp_path / "session.jsonl"
    log_path.write_text(dump_log(state) + "\n")

    out_path = tmp_path / "replayed.jsonl"
    assert run_cli("replay", str(log_path), "--out", str(out_path), "--check") == 0
    assert out_path.read_text().strip() == log_path.read_text().strip()


def test_corpus_subcommand(capsys):
    assert run_cli("corpus", "test") == 0
    out = capsys.readouterr().out
    summary = json.loads(out)
    assert summary["total"] == 60
    assert summary["accuracy"] >= 0.95
    assert summary["relation_accuracy"] == 1.0


def test_cli_usage_error_building():
    with pytest.raises(SystemExit):
        run_cli("unknown-subcommand")
