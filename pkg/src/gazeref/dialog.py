"""Dialog turn records shared by the parser, the orchestrator and the logs."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class Actor(Enum):
    USER = "user"
    SYSTEM = "system"


class TurnKind(Enum):
    GAZE_SELECT = "gaze_select"
    DESCRIBE = "describe"
    COMMAND = "command"
    FALLBACK_QUERY = "fallback_query"
    ERROR = "error"


@dataclass(frozen=True)
class DialogTurn:
    index: int
    actor: Actor
    kind: TurnKind
    text: Optional[str] = None
    mask_payload: Optional[dict] = None
    parsed_payload: Optional[dict] = None
    described_identity: Optional[str] = None
    described_adjectives: tuple[str, ...] = ()
    trace: tuple[dict, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "actor": self.actor.value,
            "kind": self.kind.value,
            "text": self.text,
            "mask": self.mask_payload,
            "parsed": self.parsed_payload,
            "described_identity": self.described_identity,
            "described_adjectives": list(self.described_adjectives),
            "trace": list(self.trace),
            "extra": self.extra,
        }

    @classmethod
    def from_record(cls, data: dict) -> "DialogTurn":
        return cls(
            index=int(data["index"]),
            actor=Actor(data["actor"]),
            kind=TurnKind(data["kind"]),
            text=data.get("text"),
            mask_payload=data.get("mask"),
            parsed_payload=data.get("parsed"),
            described_identity=data.get("described_identity"),
            described_adjectives=tuple(data.get("described_adjectives", ())),
            trace=tuple(data.get("trace", ())),
            extra=data.get("extra", {}),
        )
