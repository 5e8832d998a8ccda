"""Rule-based referential-expression parsing with dialog-history resolution.

Free-form correction commands are reduced to a (target, relation, reference)
triple over a closed relation vocabulary: spatial sides, ordinals, proximity
and part-whole belonging.  Commands without an explicit relation default to
"next to" the previous selection.  Pronouns and implicit references are
recovered from the most recent system description in the dialog history.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .dialog import DialogTurn

DETERMINERS = {"the", "a", "an"}
PRONOUN_WORDS = {"it", "them", "one", "ones", "this", "that", "these", "those"}
QUANTITY_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
NUMBER_WORD_BY_VALUE = {v: k for k, v in QUANTITY_WORDS.items()}

COLOR_TERMS = {
    "red", "orange", "yellow", "green", "blue", "purple",
    "pink", "brown", "black", "white", "gray", "gold",
}
COLOR_ALIASES = {"grey": "gray", "violet": "purple", "golden": "gold"}
SIZE_TERMS = {"small", "large", "big", "tiny"}
SHAPE_TERMS = {"round", "rectangular", "square"}
MATERIAL_TERMS = {"metal", "plastic", "glass", "wooden", "paper"}
ADJECTIVE_TERMS = COLOR_TERMS | SIZE_TERMS | SHAPE_TERMS | MATERIAL_TERMS

# Multiword heads that must not be split when finding the noun.
COMPOUND_NOUNS = {
    ("beverage", "can"), ("snack", "bag"), ("bear", "toy"),
    ("coffee", "cup"), ("water", "bottle"), ("carrot", "poster"),
}
PART_NOUNS = {"cap", "label", "body", "logo", "lid", "handle", "stripe", "band"}
IRREGULAR_SINGULAR = {"headphones": "headphones", "glasses": "glasses"}

# Leading tokens carrying intent but no content.
POLITENESS_PREFIXES = (
    ("i", "would", "like"), ("i", "want", "to", "select"), ("i", "want"),
    ("i've", "selected"), ("can", "you"), ("could", "you"), ("no,",),
    ("no",), ("now",), ("please",), ("select",), ("choose",), ("pick",),
    ("grab",), ("only",), ("just",), ("try",), ("actually",), ("me",),
)

# Trailing clause emitted by the describer when no anchor object exists.
NO_ANCHOR_TAIL = ("in", "the", "area", "you", "looked", "at")


class ParseError(ValueError):
    """Base class for typed parse failures."""


class Unparseable(ParseError):
    def __init__(self, utterance: str, reason: str = "no parseable noun phrase"):
        super().__init__(f"cannot parse {utterance!r}: {reason}")
        self.utterance = utterance
        self.reason = reason


class UnresolvedPronoun(ParseError):
    def __init__(self, utterance: str):
        super().__init__(f"pronoun in {utterance!r} with no dialog history")
        self.utterance = utterance


class RelationKind(Enum):
    LEFT = "left"
    RIGHT = "right"
    ABOVE = "above"
    BELOW = "below"
    BEHIND = "behind"
    IN_FRONT = "in_front"
    BETWEEN = "between"
    ORDINAL = "ordinal"
    PART_OF = "part_of"
    INCLUDES = "includes"
    NEXT_TO = "next_to"


class OrdinalPosition(Enum):
    LEFTMOST = "leftmost"
    RIGHTMOST = "rightmost"
    MIDDLE = "middle"
    NTH = "nth"


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    ordinal: Optional[OrdinalPosition] = None
    n: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is RelationKind.ORDINAL and self.ordinal is None:
            raise ValueError("ordinal relation without a position")
        if self.ordinal is OrdinalPosition.NTH and (self.n is None or self.n < 1):
            raise ValueError("nth ordinal requires n >= 1")

    def to_payload(self) -> dict:
        return {
            "kind": self.kind.value,
            "ordinal": self.ordinal.value if self.ordinal else None,
            "n": self.n,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "Relation":
        ordinal = data.get("ordinal")
        return cls(
            kind=RelationKind(data["kind"]),
            ordinal=OrdinalPosition(ordinal) if ordinal else None,
            n=data.get("n"),
        )


NEXT_TO_DEFAULT = Relation(RelationKind.NEXT_TO)


@dataclass(frozen=True)
class ObjectDescriptor:
    identity: str
    adjectives: tuple[str, ...] = ()
    is_pronoun: bool = False
    raw_span: str = ""

    def __post_init__(self) -> None:
        if not self.identity and not self.is_pronoun:
            raise ValueError("descriptor needs an identity unless it is a pronoun")
        if len(set(self.adjectives)) != len(self.adjectives):
            raise ValueError("adjectives must be deduplicated")

    def attributes(self) -> tuple[str, ...]:
        """Identity plus adjectives, the unit the patch scorer matches against."""
        parts = [self.identity] if self.identity else []
        parts.extend(self.adjectives)
        return tuple(parts)

    def to_payload(self) -> dict:
        return {
            "identity": self.identity,
            "adjectives": list(self.adjectives),
            "pronoun": self.is_pronoun,
            "raw_span": self.raw_span,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "ObjectDescriptor":
        return cls(
            identity=data.get("identity", ""),
            adjectives=tuple(data.get("adjectives", ())),
            is_pronoun=bool(data.get("pronoun", False)),
            raw_span=data.get("raw_span", ""),
        )


@dataclass(frozen=True)
class ParsedCommand:
    target: ObjectDescriptor
    relation: Relation
    reference: Optional[ObjectDescriptor] = None
    resolved_from: Optional[int] = None

    def to_payload(self) -> dict:
        return {
            "target": self.target.to_payload(),
            "relation": self.relation.to_payload(),
            "reference": self.reference.to_payload() if self.reference else None,
            "resolved_from": self.resolved_from,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "ParsedCommand":
        reference = data.get("reference")
        return cls(
            target=ObjectDescriptor.from_payload(data["target"]),
            relation=Relation.from_payload(data["relation"]),
            reference=ObjectDescriptor.from_payload(reference) if reference else None,
            resolved_from=data.get("resolved_from"),
        )


# Relation phrases. Style "post": target precedes the phrase, reference
# follows.  Style "pre": the phrase marks the target NP itself (ordinals,
# whole-object), so the remainder of the utterance is the target.
_ORDINAL_WORDS = {
    "first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5,
    "sixth": 6, "seventh": 7, "eighth": 8, "ninth": 9, "tenth": 10,
    "1st": 1, "2nd": 2, "3rd": 3, "4th": 4, "5th": 5,
    "6th": 6, "7th": 7, "8th": 8, "9th": 9, "10th": 10,
}


def _relation_phrases() -> list[tuple[tuple[str, ...], Relation, str]]:
    table: list[tuple[tuple[str, ...], Relation, str]] = []

    def post(phrase: str, relation: Relation) -> None:
        table.append((tuple(phrase.split()), relation, "post"))

    def pre(phrase: str, relation: Relation) -> None:
        table.append((tuple(phrase.split()), relation, "pre"))

    for side, kind in (("left", RelationKind.LEFT), ("right", RelationKind.RIGHT)):
        post(f"to the {side} of", Relation(kind))
        post(f"on the {side} of", Relation(kind))
        post(f"at the {side} of", Relation(kind))
        post(f"{side} of", Relation(kind))
        post(f"to the {side}", Relation(kind))
        post(f"on the {side}", Relation(kind))
    post("on top of", Relation(RelationKind.ABOVE))
    post("above", Relation(RelationKind.ABOVE))
    post("over", Relation(RelationKind.ABOVE))
    post("below", Relation(RelationKind.BELOW))
    post("under", Relation(RelationKind.BELOW))
    post("beneath", Relation(RelationKind.BELOW))
    post("underneath", Relation(RelationKind.BELOW))
    post("behind", Relation(RelationKind.BEHIND))
    post("in front of", Relation(RelationKind.IN_FRONT))
    post("between", Relation(RelationKind.BETWEEN))
    post("next to", Relation(RelationKind.NEXT_TO))
    post("beside", Relation(RelationKind.NEXT_TO))
    post("close to", Relation(RelationKind.NEXT_TO))
    post("near", Relation(RelationKind.NEXT_TO))
    post("part of", Relation(RelationKind.PART_OF))
    post("including", Relation(RelationKind.INCLUDES))
    post("include", Relation(RelationKind.INCLUDES))
    post("includes", Relation(RelationKind.INCLUDES))

    pre("leftmost", Relation(RelationKind.ORDINAL, OrdinalPosition.LEFTMOST))
    pre("left most", Relation(RelationKind.ORDINAL, OrdinalPosition.LEFTMOST))
    pre("rightmost", Relation(RelationKind.ORDINAL, OrdinalPosition.RIGHTMOST))
    pre("right most", Relation(RelationKind.ORDINAL, OrdinalPosition.RIGHTMOST))
    pre("in the middle", Relation(RelationKind.ORDINAL, OrdinalPosition.MIDDLE))
    pre("middle", Relation(RelationKind.ORDINAL, OrdinalPosition.MIDDLE))
    pre("center", Relation(RelationKind.ORDINAL, OrdinalPosition.MIDDLE))
    for word, n in _ORDINAL_WORDS.items():
        pre(word, Relation(RelationKind.ORDINAL, OrdinalPosition.NTH, n))
    pre("whole", Relation(RelationKind.INCLUDES))
    pre("entire", Relation(RelationKind.INCLUDES))
    pre("all of", Relation(RelationKind.INCLUDES))
    # bare pre-nominal side words ("the right pumpkin") read as ordinals
    pre("left", Relation(RelationKind.ORDINAL, OrdinalPosition.LEFTMOST))
    pre("right", Relation(RelationKind.ORDINAL, OrdinalPosition.RIGHTMOST))

    table.sort(key=lambda entry: -len(entry[0]))
    return table


RELATION_PHRASES = _relation_phrases()


def tokenize(utterance: str) -> list[str]:
    text = utterance.lower()
    text = re.sub(r"[^\w'\s-]", " ", text)
    return [t for t in text.split() if t]


def _strip_politeness(tokens: list[str]) -> list[str]:
    changed = True
    while changed and tokens:
        changed = False
        for prefix in POLITENESS_PREFIXES:
            if tuple(tokens[: len(prefix)]) == prefix:
                tokens = tokens[len(prefix):]
                changed = True
                break
    return tokens


def _strip_no_anchor_tail(tokens: list[str]) -> list[str]:
    n = len(NO_ANCHOR_TAIL)
    if len(tokens) >= n and tuple(tokens[-n:]) == NO_ANCHOR_TAIL:
        return tokens[:-n]
    return tokens


def singularize(word: str) -> str:
    if word in IRREGULAR_SINGULAR:
        return IRREGULAR_SINGULAR[word]
    if word.endswith("s") and len(word) > 3 and not word.endswith("ss"):
        return word[:-1]
    return word


def parse_noun_phrase(tokens: Sequence[str], raw: str) -> Optional[ObjectDescriptor]:
    """Noun phrase -> descriptor; None when no content word remains."""
    words = [
        COLOR_ALIASES.get(t, t)
        for t in tokens
        if t not in DETERMINERS and t not in _NP_FUNCTION_WORDS
    ]
    # quantity words describe group size, not the object; the head position is
    # exempt so the pronoun reading of "the red one" survives
    if len(words) > 1:
        words = [
            w for i, w in enumerate(words)
            if w not in QUANTITY_WORDS or i == len(words) - 1
        ]
    if not words:
        return None
    if len(words) == 1 and (words[0] in PRONOUN_WORDS or words[0] in QUANTITY_WORDS):
        # a bare count ("the three") references the group like a pronoun
        return ObjectDescriptor("", (), is_pronoun=True, raw_span=raw)
    if words[-1] in PRONOUN_WORDS:
        adjectives = _collect_adjectives(words[:-1])
        return ObjectDescriptor("", adjectives, is_pronoun=True, raw_span=raw)
    if len(words) >= 2 and (words[-2], singularize(words[-1])) in COMPOUND_NOUNS:
        head = f"{words[-2]} {singularize(words[-1])}"
        rest = words[:-2]
    else:
        head = singularize(words[-1])
        rest = words[:-1]
    adjectives = _collect_adjectives(rest)
    return ObjectDescriptor(head, adjectives, raw_span=raw)


_NP_FUNCTION_WORDS = {"of", "and", "or", "with", "is", "are", "again", "more", "else", "there"}


def _collect_adjectives(words: Sequence[str]) -> tuple[str, ...]:
    out: list[str] = []
    for word in words:
        if word in PRONOUN_WORDS or word in QUANTITY_WORDS or word in _NP_FUNCTION_WORDS:
            continue
        if word not in out:
            out.append(word)
    return tuple(out)


def _find_relation(tokens: list[str]) -> Optional[tuple[int, int, Relation, str]]:
    """Leftmost longest relation phrase as (start, length, relation, style).

    Post-nominal matches outrank pre-nominal ones so that an explicit spatial
    relationship with a reference wins over an ordinal qualifier.
    """
    matches: list[tuple[int, int, Relation, str]] = []
    i = 0
    while i < len(tokens):
        hit = None
        for phrase, relation, style in RELATION_PHRASES:
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                hit = (i, len(phrase), relation, style)
                break
        if hit:
            matches.append(hit)
            i += hit[1]
        else:
            i += 1
    if not matches:
        return None
    post = [m for m in matches if m[3] == "post"]
    if post:
        return post[0]
    return matches[0]


def _extract_group_tail(
    tokens: list[str],
) -> tuple[list[str], Optional[ObjectDescriptor]]:
    """Split a trailing "among ..." group reference off the utterance."""
    for marker in ("among", "amongst"):
        if marker in tokens:
            idx = tokens.index(marker)
            tail = tokens[idx + 1 :]
            raw = " ".join(tokens[idx:])
            descriptor = parse_noun_phrase(tail, raw)
            if descriptor is None:
                descriptor = ObjectDescriptor("", (), is_pronoun=True, raw_span=raw)
            return tokens[:idx], descriptor
    return tokens, None


def parse(utterance: str, history: Sequence[DialogTurn] = ()) -> ParsedCommand:
    """Parse one free-form command; raises Unparseable when nothing is named.

    History is accepted here for interface symmetry with backends that resolve
    context during parsing; the rule-based path resolves pronouns separately in
    :func:`resolve_pronouns`.
    """
    del history  # rule-based parsing is context-free; resolution happens after
    if not utterance or not utterance.strip():
        raise Unparseable(utterance, "empty utterance")
    tokens = _strip_politeness(tokenize(utterance))
    tokens = _strip_no_anchor_tail(tokens)
    if not tokens:
        raise Unparseable(utterance, "no content after politeness stripping")
    if "not" in tokens:
        raise Unparseable(utterance, "negative feedback carries no target")

    tokens, group_reference = _extract_group_tail(tokens)
    found = _find_relation(tokens)

    if found is None:
        target = parse_noun_phrase(tokens, " ".join(tokens))
        if target is None:
            raise Unparseable(utterance)
        part_split = _split_part_phrase(tokens)
        if part_split is not None:
            part_target, part_reference = part_split
            return ParsedCommand(part_target, Relation(RelationKind.PART_OF), part_reference)
        return ParsedCommand(target, NEXT_TO_DEFAULT, group_reference)

    start, length, relation, style = found
    if style == "pre":
        remainder = tokens[:start] + tokens[start + length :]
        target = parse_noun_phrase(remainder, " ".join(remainder))
        if target is None:
            target = ObjectDescriptor("", (), is_pronoun=True, raw_span=utterance)
        return ParsedCommand(target, relation, group_reference)

    target_tokens = tokens[:start]
    reference_tokens = tokens[start + length :]
    target = parse_noun_phrase(target_tokens, " ".join(target_tokens))
    if target is None:
        target = ObjectDescriptor("", (), is_pronoun=True, raw_span=utterance)
    reference = _parse_reference(reference_tokens)
    if reference is None:
        reference = group_reference
    return ParsedCommand(target, relation, reference)


def _split_part_phrase(
    tokens: list[str],
) -> Optional[tuple[ObjectDescriptor, Optional[ObjectDescriptor]]]:
    """Recognize "<part> of <object>" when no explicit relation matched."""
    if "of" not in tokens:
        return None
    idx = tokens.index("of")
    head_tokens = tokens[:idx]
    head = parse_noun_phrase(head_tokens, " ".join(head_tokens))
    if head is None or head.is_pronoun or head.identity not in PART_NOUNS:
        return None
    reference = parse_noun_phrase(tokens[idx + 1 :], " ".join(tokens[idx + 1 :]))
    return head, reference


def _parse_reference(tokens: list[str]) -> Optional[ObjectDescriptor]:
    if not tokens:
        return None
    raw = " ".join(tokens)
    # keep only the first conjunct; the full span stays recorded for later use
    if "and" in tokens:
        tokens = tokens[: tokens.index("and")]
    return parse_noun_phrase(tokens, raw)


def _last_described(history: Sequence[DialogTurn]) -> Optional[DialogTurn]:
    for turn in reversed(history):
        if turn.described_identity:
            return turn
    return None


EXPLICIT_RELATIONS = {
    RelationKind.LEFT,
    RelationKind.RIGHT,
    RelationKind.ABOVE,
    RelationKind.BELOW,
    RelationKind.BEHIND,
    RelationKind.IN_FRONT,
    RelationKind.BETWEEN,
}


def resolve_pronouns(
    command: ParsedCommand, history: Sequence[DialogTurn]
) -> ParsedCommand:
    """Fill pronoun targets/references from the most recent system description.

    An implicit reference is only inferred when the command carries an explicit
    relationship but no reference object.
    """
    source = _last_described(history)
    target = command.target
    reference = command.reference
    resolved_from = command.resolved_from

    if target.is_pronoun:
        if source is None:
            raise UnresolvedPronoun(target.raw_span or "it")
        # keep the command's own adjectives ("the red one"); fall back to the
        # described ones only when the command supplied none ("select it")
        target = ObjectDescriptor(
            identity=source.described_identity or "",
            adjectives=target.adjectives or source.described_adjectives,
            raw_span=target.raw_span,
        )
        resolved_from = source.index

    if reference is not None and reference.is_pronoun:
        if source is None:
            raise UnresolvedPronoun(reference.raw_span or "it")
        reference = ObjectDescriptor(
            identity=source.described_identity or "",
            adjectives=reference.adjectives or source.described_adjectives,
            raw_span=reference.raw_span,
        )
        resolved_from = source.index
    elif reference is None and command.relation.kind in EXPLICIT_RELATIONS:
        if source is not None:
            reference = ObjectDescriptor(
                identity=source.described_identity or "",
                adjectives=source.described_adjectives,
                raw_span="(previous selection)",
            )
            resolved_from = source.index

    return replace(
        command, target=target, reference=reference, resolved_from=resolved_from
    )


class RelationRoute(Enum):
    GEOMETRIC = "geometric"
    ORDINAL = "ordinal"
    PROXIMITY = "proximity"
    BELONGING = "belonging"


def relation_route(relation: Relation) -> RelationRoute:
    """Routing table: which filtering/localization path a relation takes."""
    kind = relation.kind
    if kind in (RelationKind.LEFT, RelationKind.RIGHT, RelationKind.ABOVE, RelationKind.BELOW):
        return RelationRoute.GEOMETRIC
    if kind is RelationKind.ORDINAL:
        return RelationRoute.ORDINAL
    if kind in (RelationKind.PART_OF, RelationKind.INCLUDES):
        return RelationRoute.BELONGING
    # next-to, behind, in-front and between resolve by proximity: 2-D boxes
    # carry no depth, so the descriptor keeps the phrase for the scorer
    return RelationRoute.PROXIMITY


_ORDINAL_RENDER = {1: "first", 2: "second", 3: "third", 4: "fourth", 5: "fifth",
                   6: "sixth", 7: "seventh", 8: "eighth", 9: "ninth", 10: "tenth"}


def render_noun_phrase(descriptor: ObjectDescriptor) -> str:
    head = descriptor.identity if not descriptor.is_pronoun else "one"
    words = [*descriptor.adjectives, head]
    return " ".join(w for w in words if w)


def render_command(command: ParsedCommand) -> str:
    """Canonical text for a parsed command; reparsing yields equal structure."""
    target_text = render_noun_phrase(command.target)
    relation = command.relation
    ref_text = render_noun_phrase(command.reference) if command.reference else ""

    if relation.kind is RelationKind.ORDINAL:
        if relation.ordinal is OrdinalPosition.NTH:
            word = _ORDINAL_RENDER.get(relation.n or 1, f"{relation.n}th")
        else:
            word = relation.ordinal.value
        tail = " among them" if command.reference and command.reference.is_pronoun else ""
        return f"select the {word} {target_text}{tail}"
    if relation.kind is RelationKind.INCLUDES:
        if ref_text:
            return f"select the {target_text} including the {ref_text}"
        return f"select the whole {target_text}"
    if relation.kind is RelationKind.PART_OF:
        tail = f" part of the {ref_text}" if ref_text else " part of"
        return f"select the {target_text}{tail}"
    if relation.kind is RelationKind.NEXT_TO and not command.reference:
        return f"select the {target_text}"

    phrase = {
        RelationKind.LEFT: "to the left of",
        RelationKind.RIGHT: "to the right of",
        RelationKind.ABOVE: "above",
        RelationKind.BELOW: "below",
        RelationKind.BEHIND: "behind",
        RelationKind.IN_FRONT: "in front of",
        RelationKind.BETWEEN: "between",
        RelationKind.NEXT_TO: "next to",
    }[relation.kind]
    if command.reference and not command.reference.is_pronoun:
        return f"select the {target_text} {phrase} the {ref_text}"
    if command.reference and command.reference.is_pronoun:
        return f"select the {target_text} {phrase} {ref_text or 'it'}"
    if relation.kind in (RelationKind.LEFT, RelationKind.RIGHT):
        side = "left" if relation.kind is RelationKind.LEFT else "right"
        return f"select the {target_text} on the {side}"
    return f"select the {target_text} {phrase}"
