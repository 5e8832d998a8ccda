"""Command line entry points: serve, experiment, scene tools, replay, corpus.

Every failure exits nonzero with a machine-readable JSON error on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backends.base import BackendDegradation
from .config import DEFAULT_SESSION_CONFIG
from .scene import Scene
from .simulate import (
    ALL_CONDITIONS,
    CONDITION_BY_CODE,
    CorruptionChannels,
    GazeNoiseModel,
    generate_scene,
    run_experiment,
    validate_scene,
)


def _fail(kind: str, message: str, code: int = 2) -> int:
    print(json.dumps({"error": {"kind": kind, "message": message}}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazeref",
        description="Gaze-driven object referencing engine, simulator and service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    # flags fall back to GAZEREF_-prefixed environment variables
    env = os.environ.get
    serve = sub.add_parser("serve", help="run the HTTP session service")
    serve.add_argument("--host", default=env("GAZEREF_HOST", "127.0.0.1"))
    serve.add_argument("--port", type=int, default=int(env("GAZEREF_PORT", "8321")))
    serve.add_argument(
        "--backend", choices=("oracle", "wire"), default=env("GAZEREF_BACKEND", "oracle")
    )
    serve.add_argument(
        "--endpoint", default=env("GAZEREF_ENDPOINT"), help="sidecar endpoint for wire mode"
    )
    serve.add_argument(
        "--log-dir", default=env("GAZEREF_LOG_DIR"), help="append-only session log directory"
    )
    serve.add_argument("--max-sessions", type=int, default=int(env("GAZEREF_MAX_SESSIONS", "64")))

    experiment = sub.add_parser("experiment", help="run batch trials and report metrics")
    experiment.add_argument("--conditions", default="all", help='"all" or comma list like C1,C5')
    experiment.add_argument("--trials", type=int, default=50)
    experiment.add_argument("--seed", default="0")
    experiment.add_argument("--bias", type=float, default=0.0, help="gaze bias, degrees")
    experiment.add_argument("--jitter", type=float, default=0.0, help="gaze jitter std, degrees")
    experiment.add_argument("--saccade-rate", type=float, default=0.0)
    experiment.add_argument("--saccade-amplitude", type=float, default=5.0)
    experiment.add_argument("--pixels-per-degree", type=float, default=12.0)
    experiment.add_argument("--min-detectable-area", type=int, default=0)
    experiment.add_argument("--detect-miss-rate", type=float, default=0.0)
    experiment.add_argument("--scorer-noise", type=float, default=0.0)
    experiment.add_argument("--speech-error-rate", type=float, default=0.0)
    experiment.add_argument("--uninformative-rate", type=float, default=0.0)
    experiment.add_argument("--out", default="-", help="report path or - for stdout")
    experiment.add_argument(
        "--trial-log", default=None, help="also write one JSON record per trial here"
    )

    scene = sub.add_parser("scene", help="scene tooling")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    gen = scene_sub.add_parser("gen", help="generate a condition scene")
    gen.add_argument("--condition", required=True, help="condition code, e.g. C5")
    gen.add_argument("--seed", default="0")
    gen.add_argument("--out", default="-", help="scene document path or - for stdout")
    validate = scene_sub.add_parser("validate", help="check a scene against a condition")
    validate.add_argument("path")
    validate.add_argument("--condition", required=True)
    validate.add_argument("--target", type=int, default=1)
    render = scene_sub.add_parser("render", help="render a scene document to PNG")
    render.add_argument("path")
    render.add_argument("--out", required=True)

    replay = sub.add_parser("replay", help="re-execute a session log against oracle backends")
    replay.add_argument("path")
    replay.add_argument("--out", default="-", help="new log path or - for stdout")
    replay.add_argument(
        "--check", action="store_true", help="exit nonzero unless the replay matches the log"
    )

    corpus = sub.add_parser("corpus", help="parser corpus tooling")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)
    corpus_test = corpus_sub.add_parser("test", help="run the utterance corpus")
    corpus_test.add_argument(
        "--corpus", default=None, help="corpus path (defaults to the committed corpus)"
    )
    return parser


def _write_out(path: str, text: str) -> None:
    if path == "-":
        print(text)
    else:
        Path(path).write_text(text + ("" if text.endswith("\n") else "\n"))


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import ServiceConfig, run_service

    config = ServiceConfig(
        host=args.host,
        port=args.port,
        backend_mode=args.backend,
        wire_endpoint=args.endpoint,
        log_dir=args.log_dir,
        max_sessions=args.max_sessions,
    )
    run_service(config)
    return 0


def _parse_conditions(spec: str):
    if spec.strip().lower() == "all":
        return list(ALL_CONDITIONS)
    out = []
    for code in spec.split(","):
        code = code.strip().upper()
        if code not in CONDITION_BY_CODE:
            raise KeyError(code)
        out.append(CONDITION_BY_CODE[code])
    return out


def _cmd_experiment(args: argparse.Namespace) -> int:
    try:
        conditions = _parse_conditions(args.conditions)
    except KeyError as exc:
        return _fail("bad_condition", f"unknown condition {exc.args[0]!r}")
    noise = GazeNoiseModel(
        bias_deg=args.bias,
        jitter_std_deg=args.jitter,
        saccade_rate=args.saccade_rate,
        saccade_amplitude_deg=args.saccade_amplitude,
        pixels_per_degree=args.pixels_per_degree,
    )
    degradation = BackendDegradation(
        min_detectable_area=args.min_detectable_area,
        detect_miss_rate=args.detect_miss_rate,
        scorer_noise=args.scorer_noise,
    )
    channels = CorruptionChannels(
        speech_error_rate=args.speech_error_rate,
        uninformative_rate=args.uninformative_rate,
    )
    report = run_experiment(
        conditions,
        args.trials,
        noise,
        degradation,
        seed=args.seed,
        config=DEFAULT_SESSION_CONFIG,
        channels=channels,
    )
    _write_out(args.out, report.to_json())
    if args.trial_log:
        lines = [json.dumps(t.to_dict(), sort_keys=True) for t in report.trials]
        Path(args.trial_log).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_scene(args: argparse.Namespace) -> int:
    if args.scene_command == "gen":
        code = args.condition.strip().upper()
        if code not in CONDITION_BY_CODE:
            return _fail("bad_condition", f"unknown condition {code!r}")
        scene, target_id = generate_scene(CONDITION_BY_CODE[code], args.seed)
        document = scene.to_dict()
        document["target_id"] = target_id
        _write_out(args.out, json.dumps(document, sort_keys=True, indent=1))
        return 0
    if args.scene_command == "validate":
        code = args.condition.strip().upper()
        if code not in CONDITION_BY_CODE:
            return _fail("bad_condition", f"unknown condition {code!r}")
        try:
            data = json.loads(Path(args.path).read_text())
        except (OSError, ValueError) as exc:
            return _fail("bad_scene_file", str(exc))
        target_id = int(data.pop("target_id", args.target))
        scene = Scene.from_dict(data)
        violations = validate_scene(scene, target_id, CONDITION_BY_CODE[code])
        if violations:
            print(json.dumps({"violations": violations}, indent=1), file=sys.stderr)
            return 1
        print(json.dumps({"violations": []}))
        return 0
    if args.scene_command == "render":
        from .service import _scene_to_png

        try:
            data = json.loads(Path(args.path).read_text())
        except (OSError, ValueError) as exc:
            return _fail("bad_scene_file", str(exc))
        data.pop("target_id", None)
        scene = Scene.from_dict(data)
        Path(args.out).write_bytes(_scene_to_png(scene))
        return 0
    return _fail("bad_command", f"unknown scene command {args.scene_command!r}")


def _cmd_replay(args: argparse.Namespace) -> int:
    from .session import dump_log, replay_log

    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        return _fail("bad_log_file", str(exc))
    state = replay_log(text)
    replayed = dump_log(state)
    _write_out(args.out, replayed)
    if args.check and replayed.strip() != text.strip():
        return _fail("replay_mismatch", "replayed log differs from the recorded log", 1)
    return 0


def _cmd_corpus(args: argparse.Namespace) -> int:
    from .corpus import default_corpus_path, run_corpus

    path = Path(args.corpus) if args.corpus else default_corpus_path()
    result = run_corpus(path)
    print(json.dumps(result.summary(), indent=1, sort_keys=True))
    if result.accuracy < 0.95 or result.relation_accuracy < 1.0:
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "experiment": _cmd_experiment,
        "scene": _cmd_scene,
        "replay": _cmd_replay,
        "corpus": _cmd_corpus,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # surface unexpected failures machine-readably
        return _fail(type(exc).__name__, str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
