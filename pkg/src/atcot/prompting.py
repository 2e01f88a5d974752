"""Prompt assembly for the generation, response and reformulation steps, plus
structured-output parsing with a retry loop."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Sequence, Union

from .core import (
    AT_DEFINITIONS,
    KIND_ORDER,
    AmbiguityKind,
    Clarification,
    ClarificationKind,
    Conversation,
    GenerationOutput,
    PromptScheme,
    Scenario,
    effective_query,
)
from .llm_backend import ChatBackend, Message, Role, SamplingParams

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
DEFAULT_MAX_RETRIES = 10
DEFAULT_N_OUTPUTS = 5

AT_SECTION_MARKER = "there are multiple possible ambiguity types"
REASONING_MARKER = "provide a textual explanation of your reasoning"


class Purpose(str, Enum):
    GENERATION = "generation"
    RESPONSE = "response"
    REFORMULATION = "reformulation"


@lru_cache(maxsize=None)
def load_template(name: str, version: str = PROMPT_VERSION) -> str:
    return resources.files("atcot").joinpath("prompts", version, f"{name}.txt").read_text(encoding="utf-8")


def render_at_definitions() -> str:
    return "\n".join(f"{kind.value}: {AT_DEFINITIONS[kind]}" for kind in KIND_ORDER)


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[Message, ...]
    scheme: Optional[PromptScheme]
    purpose: Purpose

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages or self.messages[0].role is not Role.SYSTEM:
            raise ValueError("a prompt bundle must start with a system message")

    @property
    def system(self) -> str:
        return self.messages[0].content

    @property
    def last_user(self) -> str:
        return next(m.content for m in reversed(self.messages) if m.role is Role.USER)

    def extended(self, *extra: Message) -> "PromptBundle":
        return PromptBundle(self.messages + tuple(extra), self.scheme, self.purpose)

    def to_dict(self) -> dict:
        return {
            "messages": [m.to_dict() for m in self.messages],
            "scheme": None if self.scheme is None else self.scheme.value,
            "purpose": self.purpose.value,
        }


# --- output schema -------------------------------------------------------------

_FORMAT_INSTRUCTIONS = {
    PromptScheme.STANDARD: (
        'Format your answer as a JSON object with one field: "clarifications", a list of strings. '
        "Output only the JSON object."
    ),
    PromptScheme.COT: (
        'Format your answer as a JSON object with two fields: "reasoning", a string holding your '
        'explanation, followed by "clarifications", a list of strings. Output only the JSON object.'
    ),
    PromptScheme.AT_COT: (
        'Format your answer as a JSON object with three fields: "reasoning", a string holding your '
        'explanation; "ambiguity_types", the list of applicable ambiguity type names chosen from '
        '"Semantic", "Generalize" and "Specify"; and "clarifications", a list of strings. '
        "Output only the JSON object."
    ),
}
_FORMAT_INSTRUCTIONS[PromptScheme.AT_STANDARD] = _FORMAT_INSTRUCTIONS[PromptScheme.STANDARD]


@dataclass(frozen=True)
class OutputSchema:
    scheme: PromptScheme
    clarification_kind: ClarificationKind = ClarificationKind.CLARIFYING_QUESTION

    @property
    def required_fields(self) -> tuple[str, ...]:
        if self.scheme is PromptScheme.AT_COT:
            return ("reasoning", "ambiguity_types", "clarifications")
        if self.scheme is PromptScheme.COT:
            return ("reasoning", "clarifications")
        return ("clarifications",)

    @property
    def format_instruction(self) -> str:
        return _FORMAT_INSTRUCTIONS[self.scheme]

    @classmethod
    def for_scenario(cls, scheme: PromptScheme, scenario: Scenario) -> "OutputSchema":
        return cls(PromptScheme.parse(scheme), Scenario.parse(scenario).clarification_kind)


def serialize_output(output: GenerationOutput) -> str:
    """Wire form of a generation: the JSON object the model is asked to emit."""
    obj: dict = {}
    if output.reasoning is not None:
        obj["reasoning"] = output.reasoning
    if output.predicted_types is not None:
        obj["ambiguity_types"] = [k.value for k in output.predicted_types]
    obj["clarifications"] = output.texts
    return json.dumps(obj, ensure_ascii=False)


# --- few-shot exemplars ----------------------------------------------------------

@dataclass(frozen=True)
class FewShotExample:
    input_query: str
    expected_output: str

    def check(self, schema: OutputSchema) -> None:
        parse_generation_output(self.expected_output, schema)


def load_few_shots(path: Union[str, Path, None] = None) -> dict[tuple[Scenario, PromptScheme], list[FewShotExample]]:
    """Load exemplars keyed by (scenario, scheme) from the shipped fixture or ``path``."""
    if path is None:
        raw = resources.files("atcot").joinpath("prompts", PROMPT_VERSION, "fewshots.json").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    data = json.loads(raw)
    shots = {}
    for scenario_name, by_scheme in data.items():
        scenario = Scenario.parse(scenario_name)
        for scheme_name, entries in by_scheme.items():
            scheme = PromptScheme.parse(scheme_name)
            if isinstance(entries, dict):
                entries = [entries]
            examples = []
            for e in entries:
                out = e["expected_output"]
                ex = FewShotExample(e["input_query"], out if isinstance(out, str) else json.dumps(out, ensure_ascii=False))
                ex.check(OutputSchema.for_scenario(scheme, scenario))
                examples.append(ex)
            shots[(scenario, scheme)] = examples
    return shots


def default_few_shots(scheme: PromptScheme, scenario: Scenario) -> list[FewShotExample]:
    return _shipped_shots()[(Scenario.parse(scenario), PromptScheme.parse(scheme))]


@lru_cache(maxsize=1)
def _shipped_shots():
    return load_few_shots()


# --- rendering helpers -----------------------------------------------------------

def render_history(conversation: Conversation, upto: Optional[int] = None) -> str:
    """Chat transcript: initial query, then one block per completed turn."""
    turns = conversation.turns if upto is None else conversation.turns[:upto]
    lines = [f"User: {conversation.query.text}"]
    for turn in turns:
        if conversation.scenario is Scenario.SELECT:
            offered = "; ".join(c.text for c in turn.offered)
            lines.append(f"Assistant: Suggested reformulated queries: {offered}")
            lines.append(f"User: {turn.user_reply}")
        else:
            lines.append(f"Assistant: {turn.offered[0].text}")
            if turn.user_reply:
                lines.append(f"User: {turn.user_reply}")
    return "\n".join(lines)


def _enumerate(items: Sequence[str]) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(items, start=1))


def _noun(scenario: Scenario, n: int = 1) -> str:
    base = "reformulated query" if scenario is Scenario.SELECT else "clarifying question"
    if n == 1:
        return base
    return "reformulated queries" if scenario is Scenario.SELECT else "clarifying questions"


def generation_system_text(scheme: PromptScheme, scenario: Scenario, n_outputs: int) -> str:
    scheme, scenario = PromptScheme.parse(scheme), Scenario.parse(scenario)
    body = Template(load_template(f"generation_{scheme.value}")).substitute(
        clarification=_noun(scenario), at_definitions=render_at_definitions()
    )
    count = f"Generate exactly {n_outputs} different {_noun(scenario, n_outputs)}."
    schema = OutputSchema.for_scenario(scheme, scenario)
    return f"{body}\n{count}\n{schema.format_instruction}"


def _generation_user_text(query_text: str, history: Optional[str]) -> str:
    if history is None:
        return f"Query: {query_text}"
    return f"Conversation history:\n{history}\n\nCurrent query: {query_text}"


def build_generation_prompt(
    scheme: PromptScheme,
    scenario: Scenario,
    conversation: Conversation,
    few_shots: Sequence[FewShotExample] = (),
    n_outputs: int = DEFAULT_N_OUTPUTS,
) -> PromptBundle:
    if n_outputs < 1:
        raise ValueError("n_outputs must be >= 1")
    scheme, scenario = PromptScheme.parse(scheme), Scenario.parse(scenario)
    messages = [Message(Role.SYSTEM, generation_system_text(scheme, scenario, n_outputs))]
    for shot in few_shots:
        messages.append(Message(Role.USER, _generation_user_text(shot.input_query, None)))
        messages.append(Message(Role.ASSISTANT, shot.expected_output))
    n_done = len(conversation.turns)
    history = render_history(conversation) if n_done else None
    current = effective_query(conversation, n_done)
    messages.append(Message(Role.USER, _generation_user_text(current, history)))
    return PromptBundle(tuple(messages), scheme, Purpose.GENERATION)


def build_response_prompt(
    scenario: Scenario,
    conversation: Conversation,
    offered: Sequence[Clarification],
    intent=None,
) -> PromptBundle:
    """User-side prompt: pick one reformulation (*select*) or answer the CQ (*respond*).

    ``conversation`` holds the turns completed before the current offering.
    """
    scenario = Scenario.parse(scenario)
    intent = conversation.intent if intent is None else intent
    offered = list(offered)
    if scenario is Scenario.SELECT and len(offered) < 2:
        raise ValueError("select needs at least two reformulated queries to choose from")
    if scenario is Scenario.RESPOND and len(offered) != 1:
        raise ValueError(f"respond expects exactly one clarifying question, got {len(offered)}")
    system = load_template(f"response_{scenario.value}")
    history = render_history(conversation)
    if scenario is Scenario.SELECT:
        parts = [
            f"Conversation history:\n{history}",
            f"Reformulated queries:\n{_enumerate([c.text for c in offered])}",
            f"User intent: {intent.description}",
            "Reply with the chosen reformulated query, copied exactly.",
        ]
    else:
        parts = [
            f"Conversation history:\n{history}\nAssistant: {offered[0].text}",
            f"User intent: {intent.description}",
            "Reply with your answer to the clarification question only.",
        ]
    return PromptBundle(
        (Message(Role.SYSTEM, system), Message(Role.USER, "\n\n".join(parts))),
        conversation.scheme,
        Purpose.RESPONSE,
    )


def build_reformulation_prompt(conversation: Conversation) -> PromptBundle:
    if conversation.scenario is Scenario.SELECT:
        raise ValueError("there is no reformulation step for the select scenario")
    if not conversation.turns:
        raise ValueError("reformulation needs at least one completed turn")
    user = f"Conversation history:\n{render_history(conversation)}\n\nReply with the reformulated query only."
    return PromptBundle(
        (Message(Role.SYSTEM, load_template("reformulation_respond")), Message(Role.USER, user)),
        conversation.scheme,
        Purpose.REFORMULATION,
    )


# --- parsing -------------------------------------------------------------------------

class OutputParseError(ValueError):
    def __init__(self, message: str, fragment: str = ""):
        super().__init__(message)
        self.fragment = fragment


class RetryExhaustedError(RuntimeError):
    def __init__(self, attempts: list[str], errors: list[str]):
        super().__init__(f"no parsable output after {len(attempts)} attempts; last error: {errors[-1] if errors else '-'}")
        self.attempts = attempts
        self.errors = errors


def _find_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", raw):
        try:
            obj, _ = decoder.raw_decode(raw, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise OutputParseError("no well-formed JSON object found", raw[:200])


def parse_generation_output(raw: str, schema: OutputSchema) -> GenerationOutput:
    """Parse one structured model reply.

    Prose before and after a single JSON object is ignored. Fields the scheme
    does not ask for are dropped so the result always fits ``schema.scheme``.
    """
    obj = _find_json_object(raw)
    for name in schema.required_fields:
        if name not in obj:
            raise OutputParseError(f"missing required field {name!r}", json.dumps(obj)[:200])

    items = obj["clarifications"]
    if not isinstance(items, list) or not items:
        raise OutputParseError("'clarifications' must be a non-empty list", json.dumps(items)[:200])
    clarifications = []
    for item in items:
        if isinstance(item, dict):
            item = item.get("text", item.get("question", item.get("query")))
        if not isinstance(item, str) or not item.strip():
            raise OutputParseError("every clarification must be a non-empty string", json.dumps(item)[:200])
        clarifications.append(Clarification(schema.clarification_kind, item))

    reasoning = None
    if schema.scheme.uses_reasoning:
        reasoning = obj["reasoning"]
        if not isinstance(reasoning, str) or not reasoning.strip():
            raise OutputParseError("'reasoning' must be a non-empty string", json.dumps(reasoning)[:200])

    predicted = None
    if schema.scheme is PromptScheme.AT_COT:
        names = obj["ambiguity_types"]
        if isinstance(names, str):
            names = [names]
        if not isinstance(names, list) or not names:
            raise OutputParseError("'ambiguity_types' must be a non-empty list", json.dumps(names)[:200])
        kinds = []
        for name in names:
            try:
                kinds.append(AmbiguityKind.parse(name))
            except ValueError:
                raise OutputParseError(f"unknown ambiguity type {name!r}", str(name)) from None
        if len(set(kinds)) != len(kinds):
            raise OutputParseError("duplicated ambiguity types", json.dumps(names))
        predicted = tuple(kinds)

    return GenerationOutput(tuple(clarifications), reasoning, predicted)


CORRECTION_TEMPLATE = "Your previous output failed to parse: {error}. Reply with only the JSON object."


def generate_with_retry(
    backend: ChatBackend,
    bundle: PromptBundle,
    schema: OutputSchema,
    max_retries: int = DEFAULT_MAX_RETRIES,
    params: Optional[SamplingParams] = None,
) -> GenerationOutput:
    """Call ``backend`` until a reply parses, at most ``max_retries + 1`` times.

    Each retry sends the original bundle, the failed reply and a corrective
    user message naming the parse error.
    """
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    params = params or SamplingParams()
    attempts: list[str] = []
    errors: list[str] = []
    messages = list(bundle.messages)
    for _ in range(max_retries + 1):
        raw = backend.complete(messages, params)
        attempts.append(raw)
        try:
            return parse_generation_output(raw, schema)
        except OutputParseError as exc:
            errors.append(str(exc))
            logger.debug("parse failure %d: %s", len(attempts), exc)
            messages = list(bundle.messages) + [
                Message(Role.ASSISTANT, raw),
                Message(Role.USER, CORRECTION_TEMPLATE.format(error=exc)),
            ]
    raise RetryExhaustedError(attempts, errors)


_KIND_RE = re.compile(r"\b(semantic|generalize|specify)\b", re.IGNORECASE)


def extract_predicted_types(reasoning: str) -> list[AmbiguityKind]:
    """Fallback: scan free-text reasoning for the three type names."""
    found = {AmbiguityKind.parse(m.group(1)) for m in _KIND_RE.finditer(reasoning or "")}
    return [k for k in KIND_ORDER if k in found]
