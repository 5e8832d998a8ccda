"""Interactive selection sessions: gaze select, describe, correct, repeat.

One session is a single-writer state machine over a scene: a gaze selection
produces a mask and a description, then up to ``max_rounds`` voice commands
may move the mask before the next selection resets the budget.  Every turn is
an append-only record carrying its stage traces, which makes session logs
replayable and lets the simulator attribute errors to pipeline stages.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backends.base import Backend, BackendError
from .backends.wire import SidecarParseError
from .config import SessionConfig
from .describe import (
    ContextRegion,
    Description,
    build_context_region,
    render_fallback_query,
)
from .dialog import Actor, DialogTurn, TurnKind
from .disambiguate import (
    CandidateSet,
    EmptyCandidates,
    LocalizationResult,
    collect_candidates,
    filter_noisy,
    localize,
    resolve_reference_box,
    spatial_filter,
    update_mask,
)
from .gaze import GazeSample, NoGazeData, sample_prompt
from .geometry import Mask, round_half_even
from .parsing import ParseError
from .scene import Scene

CONFIRMATION_WORDS = {"yes", "ok", "okay", "correct", "sure", "yes please", "right"}
REPHRASE_TEXT = "I could not find an object in that command. Could you rephrase it?"
NO_GAZE_TEXT = "I could not find any gaze data around the selection. Please look at the target and try again."
ROUND_LIMIT_TEXT = "The correction limit for this selection was reached. Select again with your gaze."


class SessionError(RuntimeError):
    pass


@dataclass
class SessionState:
    scene: Scene
    backend: Backend
    config: SessionConfig
    history: list[DialogTurn] = field(default_factory=list)
    current_mask: Optional[Mask] = None
    gaze_centroid: Optional[tuple[float, float]] = None
    context: Optional[ContextRegion] = None
    rounds_used: int = 0
    pending_fallback: Optional[tuple[CandidateSet, LocalizationResult]] = None
    correction_succeeded: bool = False

    def last_system_turn(self) -> Optional[DialogTurn]:
        for turn in reversed(self.history):
            if turn.actor is Actor.SYSTEM:
                return turn
        return None


def start_session(scene: Scene, backend: Backend, config: SessionConfig) -> SessionState:
    return SessionState(scene=scene, backend=backend, config=config)


def _append(state: SessionState, **kwargs) -> DialogTurn:
    turn = DialogTurn(index=len(state.history), **kwargs)
    state.history.append(turn)
    return turn


def gaze_select(
    state: SessionState, stream: Sequence[GazeSample], select_time: float
) -> DialogTurn:
    """Run the sampler and point segmentation, then describe the selection."""
    sampler = state.config.sampler
    try:
        point = sample_prompt(stream, state.scene.color_at, select_time, sampler)
    except NoGazeData:
        point = _raw_gaze_fallback(stream, select_time, sampler.sample_rate_hz)
        if point is None:
            _append(
                state,
                actor=Actor.USER,
                kind=TurnKind.GAZE_SELECT,
                extra={"stream": [s.to_record() for s in stream], "select_time": select_time},
            )
            return _append(
                state,
                actor=Actor.SYSTEM,
                kind=TurnKind.ERROR,
                text=NO_GAZE_TEXT,
                extra={"error": "no_gaze_data"},
            )

    xi = round_half_even(point[0])
    yi = round_half_even(point[1])
    xi = min(max(xi, 0), state.scene.width - 1)
    yi = min(max(yi, 0), state.scene.height - 1)

    _append(
        state,
        actor=Actor.USER,
        kind=TurnKind.GAZE_SELECT,
        extra={
            "stream": [s.to_record() for s in stream],
            "select_time": select_time,
            "prompt_point": [xi, yi],
        },
    )
    try:
        segmentation = state.backend.segment_point((xi, yi))
        mask, confidence = segmentation.best()
        context = build_context_region(
            state.scene.width,
            state.scene.height,
            mask,
            point,
            state.config.pipeline.context_padding,
        )
        description = state.backend.describe_free(mask, context)
    except BackendError as exc:
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text=f"Selection failed: {exc}",
            extra={"error": "backend", "stage": "segment_point"},
        )

    state.current_mask = mask
    state.gaze_centroid = point
    state.context = context
    state.rounds_used = 0
    state.pending_fallback = None
    state.correction_succeeded = False
    return _append(
        state,
        actor=Actor.SYSTEM,
        kind=TurnKind.DESCRIBE,
        text=description.full_text,
        mask_payload=mask.to_payload(),
        described_identity=description.identity,
        described_adjectives=description.adjectives,
        extra={"confidence": confidence, "context": context.to_payload()},
    )


def _raw_gaze_fallback(
    stream: Sequence[GazeSample], select_time: float, rate_hz: float
) -> Optional[tuple[float, float]]:
    if not stream:
        return None
    nearest = min(stream, key=lambda s: abs(s.t - select_time))
    if abs(nearest.t - select_time) <= 1.0 / max(rate_hz, 1.0):
        return (nearest.x, nearest.y)
    return None


def apply_command(state: SessionState, utterance: str) -> DialogTurn:
    """Parse a correction command and run the three-stage update pipeline."""
    if state.current_mask is None or state.context is None:
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text="Nothing is selected yet; make a gaze selection first.",
            extra={"error": "no_selection"},
        )
    if state.rounds_used >= state.config.max_rounds:
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text=ROUND_LIMIT_TEXT,
            extra={"error": "round_limit", "max_rounds": state.config.max_rounds},
        )

    last_system = state.last_system_turn()
    awaiting_confirmation = (
        last_system is not None
        and last_system.kind is TurnKind.FALLBACK_QUERY
        and state.pending_fallback is not None
    )
    if awaiting_confirmation and utterance.strip().lower().rstrip(".!") in CONFIRMATION_WORDS:
        return _commit_fallback(state, utterance)

    _append(
        state,
        actor=Actor.USER,
        kind=TurnKind.COMMAND,
        text=utterance,
        extra={"after_successful_correction": state.correction_succeeded},
    )
    try:
        command = state.backend.interpret_command(utterance, tuple(state.history))
    except (ParseError, SidecarParseError) as exc:
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text=REPHRASE_TEXT,
            extra={"error": "unparseable", "detail": str(exc)},
        )

    trace: list[dict] = [{"stage": "parse", "command": command.to_payload()}]
    pipeline = state.config.pipeline
    try:
        candidate_set, record = collect_candidates(
            state.context, state.gaze_centroid, state.backend, pipeline
        )
        trace.append(record)
        candidate_set, record = filter_noisy(candidate_set, state.backend)
        trace.append(record)
        reference_box, record = resolve_reference_box(
            command,
            state.current_mask,
            candidate_set,
            state.backend,
            pipeline.localization_threshold,
        )
        trace.append(record)
        candidate_set, record = spatial_filter(
            candidate_set, reference_box, command.relation, pipeline
        )
        trace.append(record)
        result, record = localize(
            command,
            candidate_set,
            reference_box,
            state.backend,
            pipeline,
            (state.scene.width, state.scene.height),
        )
        trace.append(record)
    except EmptyCandidates:
        state.rounds_used += 1
        state.pending_fallback = None
        description = Description(adjectives=(), identity="background area", relation_clause="")
        trace.append({"stage": "collect", "outcome": "empty"})
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.FALLBACK_QUERY,
            text=render_fallback_query(description),
            parsed_payload=command.to_payload(),
            described_identity=description.identity,
            trace=tuple(trace),
            extra={"fallback_candidate": None},
        )
    except BackendError as exc:
        state.rounds_used += 1
        stage = trace[-1]["stage"] if trace else "collect"
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text=f"The {stage} stage failed: {exc}",
            parsed_payload=command.to_payload(),
            trace=tuple(trace),
            extra={"error": "backend", "stage": stage},
        )

    state.rounds_used += 1
    if result.is_selected:
        try:
            mask = update_mask(result, candidate_set, state.backend)
        except BackendError as exc:
            return _append(
                state,
                actor=Actor.SYSTEM,
                kind=TurnKind.ERROR,
                text=f"Could not update the selection mask: {exc}",
                parsed_payload=command.to_payload(),
                trace=tuple(trace),
                extra={"error": "backend", "stage": "update_mask"},
            )
        state.current_mask = mask
        state.pending_fallback = None
        state.correction_succeeded = True
        description = state.backend.describe_free(mask, state.context)
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.DESCRIBE,
            text=description.full_text,
            mask_payload=mask.to_payload(),
            parsed_payload=command.to_payload(),
            described_identity=description.identity,
            described_adjectives=description.adjectives,
            trace=tuple(trace),
            extra={"selected_candidate": result.selected_id, "score": result.selected_score},
        )

    state.pending_fallback = (candidate_set, result)
    description = result.fallback or Description(
        adjectives=(), identity="background area", relation_clause=""
    )
    fallback_box = (
        candidate_set.by_id(result.fallback_candidate_id).box.to_payload()
        if result.fallback_candidate_id is not None
        else None
    )
    return _append(
        state,
        actor=Actor.SYSTEM,
        kind=TurnKind.FALLBACK_QUERY,
        text=render_fallback_query(description),
        parsed_payload=command.to_payload(),
        described_identity=description.identity,
        described_adjectives=description.adjectives,
        trace=tuple(trace),
        extra={
            "fallback_candidate": result.fallback_candidate_id,
            "fallback_box": fallback_box,
        },
    )


def _commit_fallback(state: SessionState, utterance: str) -> DialogTurn:
    candidate_set, result = state.pending_fallback
    _append(
        state,
        actor=Actor.USER,
        kind=TurnKind.COMMAND,
        text=utterance,
        extra={"confirmation": True},
    )
    state.rounds_used += 1
    state.pending_fallback = None
    if result.fallback_candidate_id is None:
        description = state.backend.describe_free(state.current_mask, state.context)
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.DESCRIBE,
            text=description.full_text,
            mask_payload=state.current_mask.to_payload(),
            described_identity=description.identity,
            described_adjectives=description.adjectives,
            extra={"confirmed": True, "kept_previous": True},
        )
    committed = LocalizationResult(
        scores=result.scores,
        rationales=result.rationales,
        selected_id=result.fallback_candidate_id,
        selected_score=result.scores.get(result.fallback_candidate_id),
    )
    try:
        mask = update_mask(committed, candidate_set, state.backend)
    except BackendError as exc:
        return _append(
            state,
            actor=Actor.SYSTEM,
            kind=TurnKind.ERROR,
            text=f"Could not update the selection mask: {exc}",
            extra={"error": "backend", "stage": "update_mask"},
        )
    state.current_mask = mask
    state.correction_succeeded = True
    description = state.backend.describe_free(mask, state.context)
    return _append(
        state,
        actor=Actor.SYSTEM,
        kind=TurnKind.DESCRIBE,
        text=description.full_text,
        mask_payload=mask.to_payload(),
        described_identity=description.identity,
        described_adjectives=description.adjectives,
        extra={"confirmed": True, "committed_candidate": result.fallback_candidate_id},
    )


API_VERSION = 1


def snapshot(state: SessionState) -> dict:
    """Serializable session view consumed by the console and the logs."""
    return {
        "api_version": API_VERSION,
        "scene": {"name": state.scene.name, "width": state.scene.width, "height": state.scene.height},
        "rounds_used": state.rounds_used,
        "max_rounds": state.config.max_rounds,
        "current_mask": state.current_mask.to_payload() if state.current_mask else None,
        "gaze_centroid": list(state.gaze_centroid) if state.gaze_centroid else None,
        "history": [turn.to_record() for turn in state.history],
    }


# -- session logs ----------------------------------------------------------


def log_records(state: SessionState) -> list[dict]:
    """Full session log: a replayable header plus one record per turn."""
    header = {
        "kind": "header",
        "api_version": API_VERSION,
        "scene": state.scene.to_dict(),
        "config": config_to_dict(state.config),
    }
    return [header] + [{"kind": "turn", "data": t.to_record()} for t in state.history]


def dump_log(state: SessionState) -> str:
    return "\n".join(json.dumps(r, sort_keys=True) for r in log_records(state))


def config_to_dict(config: SessionConfig) -> dict:
    from dataclasses import asdict

    return asdict(config)


def config_from_dict(data: dict) -> SessionConfig:
    from .config import PipelineConfig, SamplerConfig

    return SessionConfig(
        max_rounds=int(data.get("max_rounds", 2)),
        sampler=SamplerConfig(**data.get("sampler", {})),
        pipeline=PipelineConfig(**data.get("pipeline", {})),
    )


def replay_log(
    text: str, backend_factory=None
) -> SessionState:
    """Re-execute a session log's user inputs against oracle backends."""
    from .backends.oracle import OracleBackend

    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise SessionError("session log must start with a header record")
    header = lines[0]
    scene = Scene.from_dict(header["scene"])
    config = config_from_dict(header.get("config", {}))
    backend = backend_factory(scene) if backend_factory else OracleBackend(scene)
    state = start_session(scene, backend, config)
    for record in lines[1:]:
        if record.get("kind") != "turn":
            continue
        turn = DialogTurn.from_record(record["data"])
        if turn.actor is not Actor.USER:
            continue
        if turn.kind is TurnKind.GAZE_SELECT:
            stream = [GazeSample.from_record(r) for r in turn.extra.get("stream", ())]
            gaze_select(state, stream, float(turn.extra.get("select_time", 0.0)))
        elif turn.kind is TurnKind.COMMAND:
            apply_command(state, turn.text or "")
    return state
