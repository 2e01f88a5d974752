"""Domain types shared across the package.

Everything here is immutable after construction and free of I/O. Every type
serializes to a flat JSON-style dict (``to_dict``) and back (``from_dict``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

DEFAULT_MAX_TURNS = 3


class AmbiguityKind(str, Enum):
    SEMANTIC = "Semantic"
    GENERALIZE = "Generalize"
    SPECIFY = "Specify"

    @classmethod
    def parse(cls, name: str) -> "AmbiguityKind":
        """Case-insensitive lookup by kind name; anything else is rejected."""
        if isinstance(name, cls):
            return name
        if not isinstance(name, str):
            raise ValueError(f"ambiguity type must be a string, got {name!r}")
        key = name.strip().lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown ambiguity type: {name!r}")


# Canonical definitions of the three ambiguity types. Prompt templates embed
# these byte-for-byte.
AT_DEFINITIONS: dict[AmbiguityKind, str] = {
    AmbiguityKind.SEMANTIC: (
        "The query is semantically ambiguous for several common reasons: it may "
        "include homonyms; a word in the query may refer to a specific entity "
        "while also functioning as a common word; or an entity mentioned in the "
        "query could refer to multiple distinct entities."
    ),
    AmbiguityKind.GENERALIZE: (
        "The query focuses on specific information; however, a broader, closely "
        "related query might better capture the user's true information needs."
    ),
    AmbiguityKind.SPECIFY: (
        "The query has a clear focus but may encompass too broad a research "
        "scope. It is possible to further narrow down this scope by providing "
        "more specific information related to the query."
    ),
}

KIND_ORDER = (AmbiguityKind.SEMANTIC, AmbiguityKind.GENERALIZE, AmbiguityKind.SPECIFY)


@dataclass(frozen=True)
class AmbiguityType:
    kind: AmbiguityKind
    definition_text: str

    def __post_init__(self):
        if self.definition_text != AT_DEFINITIONS[self.kind]:
            raise ValueError(f"definition text for {self.kind.value} is not canonical")

    @classmethod
    def of(cls, kind: AmbiguityKind | str) -> "AmbiguityType":
        kind = AmbiguityKind.parse(kind)
        return cls(kind, AT_DEFINITIONS[kind])

    @classmethod
    def all(cls) -> list["AmbiguityType"]:
        return [cls.of(k) for k in KIND_ORDER]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "definition_text": self.definition_text}

    @classmethod
    def from_dict(cls, d: dict) -> "AmbiguityType":
        return cls(AmbiguityKind.parse(d["kind"]), d["definition_text"])


class PromptScheme(str, Enum):
    STANDARD = "standard"
    AT_STANDARD = "at_standard"
    COT = "cot"
    AT_COT = "at_cot"

    @property
    def uses_ambiguity_types(self) -> bool:
        return self in (PromptScheme.AT_STANDARD, PromptScheme.AT_COT)

    @property
    def uses_reasoning(self) -> bool:
        return self in (PromptScheme.COT, PromptScheme.AT_COT)

    @property
    def label(self) -> str:
        return _SCHEME_LABELS[self]

    @classmethod
    def parse(cls, name: str) -> "PromptScheme":
        if isinstance(name, cls):
            return name
        key = re.sub(r"[\s\-_]", "", str(name)).lower()
        for scheme in cls:
            if scheme.value.replace("_", "") == key:
                return scheme
        raise ValueError(f"unknown prompt scheme: {name!r}")


_SCHEME_LABELS = {
    PromptScheme.STANDARD: "standard",
    PromptScheme.AT_STANDARD: "AT-standard",
    PromptScheme.COT: "CoT",
    PromptScheme.AT_COT: "AT-CoT",
}

ALL_SCHEMES = (PromptScheme.STANDARD, PromptScheme.AT_STANDARD, PromptScheme.COT, PromptScheme.AT_COT)


class Scenario(str, Enum):
    SELECT = "select"
    RESPOND = "respond"

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown scenario: {name!r}") from None

    @property
    def clarification_kind(self) -> "ClarificationKind":
        if self is Scenario.SELECT:
            return ClarificationKind.REFORMULATED_QUERY
        return ClarificationKind.CLARIFYING_QUESTION


ALL_SCENARIOS = (Scenario.SELECT, Scenario.RESPOND)


class ClarificationKind(str, Enum):
    CLARIFYING_QUESTION = "clarifying_question"
    REFORMULATED_QUERY = "reformulated_query"


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    ambiguity_level: Optional[int] = None

    def __post_init__(self):
        text = (self.text or "").strip()
        if not text:
            raise ValueError(f"query {self.query_id!r} has empty text")
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "query_id", str(self.query_id))
        level = self.ambiguity_level
        if level is not None:
            if isinstance(level, bool) or not isinstance(level, int) or not 1 <= level <= 4:
                raise ValueError(f"ambiguity level must be an integer in [1, 4], got {level!r}")

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "text": self.text, "ambiguity_level": self.ambiguity_level}

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        return cls(d["query_id"], d["text"], d.get("ambiguity_level"))


@dataclass(frozen=True)
class UserIntent:
    intent_id: str
    query_id: str
    description: str

    def __post_init__(self):
        if not (self.description or "").strip():
            raise ValueError(f"intent {self.intent_id!r} has an empty description")
        object.__setattr__(self, "intent_id", str(self.intent_id))
        object.__setattr__(self, "query_id", str(self.query_id))

    def to_dict(self) -> dict:
        return {"intent_id": self.intent_id, "query_id": self.query_id, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "UserIntent":
        return cls(d["intent_id"], d["query_id"], d["description"])


@dataclass(frozen=True)
class Clarification:
    kind: ClarificationKind
    text: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ClarificationKind(self.kind))
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("clarification text must be a non-empty string")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "Clarification":
        return cls(ClarificationKind(d["kind"]), d["text"])


@dataclass(frozen=True)
class GenerationOutput:
    clarifications: tuple[Clarification, ...]
    reasoning: Optional[str] = None
    predicted_types: Optional[tuple[AmbiguityKind, ...]] = None

    def __post_init__(self):
        clarifications = tuple(self.clarifications)
        if not clarifications:
            raise ValueError("a generation must contain at least one clarification")
        object.__setattr__(self, "clarifications", clarifications)
        if self.predicted_types is not None:
            kinds = tuple(AmbiguityKind.parse(k) for k in self.predicted_types)
            if not kinds:
                raise ValueError("predicted_types, when present, must be non-empty")
            if len(set(kinds)) != len(kinds):
                raise ValueError(f"duplicated predicted ambiguity types: {[k.value for k in kinds]}")
            object.__setattr__(self, "predicted_types", kinds)

    def check_scheme(self, scheme: PromptScheme) -> None:
        """Raise ``ValueError`` if reasoning/predicted types don't fit ``scheme``."""
        if scheme.uses_reasoning != (self.reasoning is not None):
            raise ValueError(f"reasoning presence does not match scheme {scheme.label}")
        if (scheme is PromptScheme.AT_COT) != (self.predicted_types is not None):
            raise ValueError(f"predicted_types presence does not match scheme {scheme.label}")

    @property
    def texts(self) -> list[str]:
        return [c.text for c in self.clarifications]

    def to_dict(self) -> dict:
        return {
            "reasoning": self.reasoning,
            "predicted_types": None if self.predicted_types is None else [k.value for k in self.predicted_types],
            "clarifications": [c.to_dict() for c in self.clarifications],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationOutput":
        types = d.get("predicted_types")
        return cls(
            clarifications=tuple(Clarification.from_dict(c) for c in d["clarifications"]),
            reasoning=d.get("reasoning"),
            predicted_types=None if types is None else tuple(types),
        )


@dataclass(frozen=True)
class Turn:
    index: int
    offered: tuple[Clarification, ...]
    user_reply: str
    reformulated_query: Optional[str] = None

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("turn index starts at 1")
        object.__setattr__(self, "offered", tuple(self.offered))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "offered": [c.to_dict() for c in self.offered],
            "user_reply": self.user_reply,
            "reformulated_query": self.reformulated_query,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(
            index=d["index"],
            offered=tuple(Clarification.from_dict(c) for c in d["offered"]),
            user_reply=d["user_reply"],
            reformulated_query=d.get("reformulated_query"),
        )


@dataclass(frozen=True)
class Conversation:
    query: Query
    intent: UserIntent
    scenario: Scenario
    scheme: PromptScheme
    turns: tuple[Turn, ...] = ()
    max_turns: int = DEFAULT_MAX_TURNS

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        object.__setattr__(self, "scheme", PromptScheme.parse(self.scheme))
        turns = tuple(self.turns)
        object.__setattr__(self, "turns", turns)
        if self.intent.query_id != self.query.query_id:
            raise ValueError(
                f"intent {self.intent.intent_id!r} belongs to query {self.intent.query_id!r}, "
                f"not {self.query.query_id!r}"
            )
        if len(turns) > self.max_turns:
            raise ValueError(f"{len(turns)} turns exceed max_turns={self.max_turns}")
        for expected, turn in enumerate(turns, start=1):
            if turn.index != expected:
                raise ValueError(f"turn indices must be contiguous from 1; got {turn.index} at position {expected}")
        kind = self.scenario.clarification_kind
        for turn in turns:
            if any(c.kind is not kind for c in turn.offered):
                raise ValueError(f"turn {turn.index} offers clarifications of the wrong kind for {self.scenario.value}")
            if self.scenario is Scenario.SELECT and turn.user_reply not in {c.text for c in turn.offered}:
                raise ValueError(f"turn {turn.index}: selected reply is not one of the offered reformulations")

    def with_turn(self, turn: Turn) -> "Conversation":
        return Conversation(self.query, self.intent, self.scenario, self.scheme, self.turns + (turn,), self.max_turns)

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "intent": self.intent.to_dict(),
            "scenario": self.scenario.value,
            "scheme": self.scheme.value,
            "turns": [t.to_dict() for t in self.turns],
            "max_turns": self.max_turns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Conversation":
        return cls(
            query=Query.from_dict(d["query"]),
            intent=UserIntent.from_dict(d["intent"]),
            scenario=Scenario.parse(d["scenario"]),
            scheme=PromptScheme.parse(d["scheme"]),
            turns=tuple(Turn.from_dict(t) for t in d["turns"]),
            max_turns=d.get("max_turns", DEFAULT_MAX_TURNS),
        )


def effective_query(conversation: Conversation, turn_index: int) -> str:
    """Query text carried into retrieval after ``turn_index`` completed turns.

    Turn 0 is the original query. Under *select* it is the reformulation the
    user picked at that turn; under *respond* the reformulated query produced
    by summarizing the conversation up to that turn.
    """
    if not 0 <= turn_index <= len(conversation.turns):
        raise IndexError(f"turn_index {turn_index} outside 0..{len(conversation.turns)}")
    if turn_index == 0:
        return conversation.query.text
    turn = conversation.turns[turn_index - 1]
    if conversation.scenario is Scenario.SELECT:
        return turn.user_reply
    if not turn.reformulated_query:
        raise ValueError(f"respond turn {turn_index} has no reformulated query")
    return turn.reformulated_query


_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())

