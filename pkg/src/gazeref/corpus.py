"""Committed utterance corpus for the referential-expression parser.

Each record carries an utterance and its expected parse structure (or an
expected typed error).  Records with a ``history`` field additionally run
pronoun/implicit-reference resolution against that canned dialog before
comparing.  Records tagged ``relation`` form the relation-keyword sub-suite;
records tagged ``quoted`` are verbatim commands users gave the deployed
system, the rest are systematic paraphrases.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .dialog import Actor, DialogTurn, TurnKind
from .parsing import ParseError, parse, resolve_pronouns


def default_corpus_path() -> Path:
    return Path(__file__).parent / "data" / "corpus.jsonl"


@dataclass(frozen=True)
class CorpusOutcome:
    total: int
    passed: int
    relation_total: int
    relation_passed: int
    failures: tuple[dict, ...]

    @property
    def accuracy(self) -> float:
        return self.passed / self.total if self.total else 0.0

    @property
    def relation_accuracy(self) -> float:
        return self.relation_passed / self.relation_total if self.relation_total else 0.0

    def summary(self) -> dict:
        return {
            "total": self.total,
            "passed": self.passed,
            "accuracy": self.accuracy,
            "relation_total": self.relation_total,
            "relation_passed": self.relation_passed,
            "relation_accuracy": self.relation_accuracy,
            "failures": list(self.failures),
        }


def _history_turns(records: list[dict]) -> tuple[DialogTurn, ...]:
    turns = []
    for i, rec in enumerate(records):
        turns.append(
            DialogTurn(
                index=i,
                actor=Actor.SYSTEM,
                kind=TurnKind.DESCRIBE,
                described_identity=rec["identity"],
                described_adjectives=tuple(rec.get("adjectives", ())),
            )
        )
    return tuple(turns)


def _normalize(payload: dict) -> dict:
    payload = dict(payload)
    payload.pop("resolved_from", None)
    for key in ("target", "reference"):
        if isinstance(payload.get(key), dict):
            slot = dict(payload[key])
            slot.pop("raw_span", None)
            payload[key] = slot
    return payload


def check_record(record: dict) -> Optional[dict]:
    """None when the parse matches the expectation, else a failure report."""
    utterance = record["utterance"]
    history = _history_turns(record.get("history", []))
    try:
        command = parse(utterance, history)
        if "history" in record:
            command = resolve_pronouns(command, history)
    except ParseError as exc:
        if record.get("expect_error"):
            return None
        return {"utterance": utterance, "error": type(exc).__name__, "expected": record.get("expect")}
    if record.get("expect_error"):
        return {
            "utterance": utterance,
            "got": command.to_payload(),
            "expected_error": record["expect_error"],
        }
    got = _normalize(command.to_payload())
    expected = _normalize(record["expect"])
    if got != expected:
        return {"utterance": utterance, "got": got, "expected": expected}
    return None


def run_corpus(path: Path) -> CorpusOutcome:
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    failures: list[dict] = []
    passed = 0
    relation_total = 0
    relation_passed = 0
    for record in records:
        failure = check_record(record)
        is_relation = "relation" in record.get("tags", ())
        relation_total += int(is_relation)
        if failure is None:
            passed += 1
            relation_passed += int(is_relation)
        else:
            failures.append(failure)
    return CorpusOutcome(
        total=len(records),
        passed=passed,
        relation_total=relation_total,
        relation_passed=relation_passed,
        failures=tuple(failures),
    )
