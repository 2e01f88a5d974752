"""Multi-turn user simulation.

Each turn chains up to three model calls: generation of clarifications,
a simulated user reply, and (for *respond*) a reformulation of the whole
conversation into a query.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    DEFAULT_MAX_TURNS,
    Clarification,
    Conversation,
    PromptScheme,
    Query,
    Scenario,
    Turn,
    UserIntent,
    effective_query,
    tokenize,
)
from .llm_backend import ChatBackend, Message, Role, SamplingParams, cache_key
from .prompting import (
    DEFAULT_MAX_RETRIES,
    FewShotExample,
    OutputSchema,
    build_generation_prompt,
    build_reformulation_prompt,
    build_response_prompt,
    default_few_shots,
    generate_with_retry,
)

logger = logging.getLogger(__name__)

SELECTION_CORRECTION = (
    "Your answer must be exactly one of the listed reformulated queries. "
    "Reply with the chosen query copied exactly."
)


_DEFAULT_N = {Scenario.SELECT: 5, Scenario.RESPOND: 1}


class SimulationError(RuntimeError):
    """A conversation could not be completed; ``record`` holds the partial run."""

    def __init__(self, message: str, record: Optional["RunRecord"] = None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class SimulationConfig:
    scenario: Scenario
    scheme: PromptScheme
    max_turns: int = DEFAULT_MAX_TURNS
    n_outputs: Optional[int] = None
    sampling: SamplingParams = field(default_factory=SamplingParams)
    max_retries: int = DEFAULT_MAX_RETRIES
    # "single": one call asks for all n_outputs; "per_output": n calls asking for one each
    generation_calls: str = "single"

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        object.__setattr__(self, "scheme", PromptScheme.parse(self.scheme))
        if self.n_outputs is None:
            object.__setattr__(self, "n_outputs", _DEFAULT_N[self.scenario])
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.scenario is Scenario.SELECT and self.n_outputs < 2:
            raise ValueError("select needs n_outputs >= 2")
        if self.n_outputs < 1:
            raise ValueError("n_outputs must be >= 1")
        if self.generation_calls not in ("single", "per_output"):
            raise ValueError("generation_calls must be 'single' or 'per_output'")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "scheme": self.scheme.value,
            "max_turns": self.max_turns,
            "n_outputs": self.n_outputs,
            "sampling": self.sampling.to_dict(),
            "max_retries": self.max_retries,
            "generation_calls": self.generation_calls,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        d = dict(d)
        d["sampling"] = SamplingParams.from_dict(d.get("sampling", {}))
        return cls(**d)


@dataclass(frozen=True)
class RunRecord:
    config: SimulationConfig
    conversation: Conversation
    per_turn_effective_queries: tuple[str, ...]
    provenance: dict
    dataset: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "per_turn_effective_queries", tuple(self.per_turn_effective_queries))
        if len(self.per_turn_effective_queries) != len(self.conversation.turns) + 1:
            raise ValueError("need one effective query per completed turn plus the original")

    @property
    def key(self) -> str:
        return record_key(self.dataset, self.config.scheme, self.config.scenario,
                          self.conversation.query.query_id, self.conversation.intent.intent_id)

    @property
    def ok(self) -> bool:
        return self.provenance.get("status") == "ok"

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config.to_dict(),
            "conversation": self.conversation.to_dict(),
            "per_turn_effective_queries": list(self.per_turn_effective_queries),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            config=SimulationConfig.from_dict(d["config"]),
            conversation=Conversation.from_dict(d["conversation"]),
            per_turn_effective_queries=tuple(d["per_turn_effective_queries"]),
            provenance=d["provenance"],
            dataset=d.get("dataset", "default"),
        )


def record_key(dataset: str, scheme, scenario, query_id: str, intent_id: str) -> str:
    return f"{dataset}/{PromptScheme.parse(scheme).value}/{Scenario.parse(scenario).value}/{query_id}.{intent_id}"


class _Tracer:
    """Forward calls to a backend while folding each request key into a digest."""

    def __init__(self, backend: ChatBackend):
        self.backend = backend
        self.identity = backend.identity
        self._digest = hashlib.sha256()
        self.calls = 0

    def complete(self, messages, params):
        self._digest.update(cache_key(messages, params, self.identity).encode())
        self.calls += 1
        return self.backend.complete(messages, params)

    @property
    def digest(self) -> str:
        return self._digest.hexdigest()


def _normalize_choice(text: str) -> str:
    text = text.strip().strip("\"'`").strip()
    text = re.sub(r"^(?:\(?\d+[.)]|[-*])\s*", "", text)
    return " ".join(text.strip().strip("\"'`").split()).lower()


def match_selection(reply: str, offered: Sequence[Clarification]) -> Optional[int]:
    """Index of the offered reformulation named by ``reply``, or ``None``.

    Accepts the text itself (case, quotes, list numbering and whitespace
    ignored) or a bare list number.
    """
    stripped = reply.strip().strip("\"'`").strip().rstrip(".")
    if stripped.isdigit():
        idx = int(stripped) - 1
        return idx if 0 <= idx < len(offered) else None
    target = _normalize_choice(reply)
    for i, c in enumerate(offered):
        if _normalize_choice(c.text) == target:
            return i
    first_line = reply.strip().splitlines()[0] if reply.strip() else ""
    if first_line and first_line != reply.strip():
        return match_selection(first_line, offered)
    return None


def _lexical_nearest(reply: str, offered: Sequence[Clarification]) -> int:
    reply_tokens = set(tokenize(reply))

    def overlap(c: Clarification) -> float:
        toks = set(tokenize(c.text))
        if not toks and not reply_tokens:
            return 1.0
        return len(toks & reply_tokens) / max(len(toks | reply_tokens), 1)

    scores = [overlap(c) for c in offered]
    return max(range(len(offered)), key=lambda i: (scores[i], -i))


def _generate(state: Conversation, config: SimulationConfig, backend, few_shots) -> tuple[list[Clarification], dict]:
    schema = OutputSchema.for_scenario(config.scheme, config.scenario)
    if config.generation_calls == "single":
        bundle = build_generation_prompt(config.scheme, config.scenario, state, few_shots, config.n_outputs)
        outputs = [generate_with_retry(backend, bundle, schema, config.max_retries, config.sampling)]
    else:
        bundle = build_generation_prompt(config.scheme, config.scenario, state, few_shots, 1)
        outputs = []
        for i in range(config.n_outputs):
            params = config.sampling if config.sampling.seed is None else replace(config.sampling, seed=config.sampling.seed + i)
            outputs.append(generate_with_retry(backend, bundle, schema, config.max_retries, params))
    generated = [c for out in outputs for c in out.clarifications]
    info = {"generated": len(generated), "requested": config.n_outputs}
    types = [k.value for out in outputs for k in (out.predicted_types or ())]
    if types:
        info["predicted_types"] = sorted(set(types))
    if len(generated) < config.n_outputs:
        logger.info("under-generation: %d of %d", len(generated), config.n_outputs)
    return generated, info


def simulate_turn(
    state: Conversation,
    config: SimulationConfig,
    backend: ChatBackend,
    few_shots: Optional[Sequence[FewShotExample]] = None,
    notes: Optional[list] = None,
) -> Turn:
    if len(state.turns) >= config.max_turns:
        raise SimulationError(f"conversation already has {len(state.turns)} turns")
    if few_shots is None:
        few_shots = default_few_shots(config.scheme, config.scenario)
    index = len(state.turns) + 1
    generated, info = _generate(state, config, backend, few_shots)
    info["turn"] = index

    if config.scenario is Scenario.SELECT:
        offered = generated[: config.n_outputs]
        if len(offered) == 1:
            info["selection"] = "only-option"
            chosen = 0
        else:
            chosen = _select(state, offered, config, backend, info)
        turn = Turn(index, tuple(offered), offered[chosen].text)
    else:
        # a respond turn shows the user exactly one question
        offered = generated[:1]
        bundle = build_response_prompt(Scenario.RESPOND, state, offered)
        answer = backend.complete(bundle.messages, config.sampling).strip()
        partial = state.with_turn(Turn(index, tuple(offered), answer))
        reform_bundle = build_reformulation_prompt(partial)
        reformulated = _clean_line(backend.complete(reform_bundle.messages, config.sampling))
        if not reformulated:
            raise SimulationError(f"turn {index}: empty reformulated query")
        turn = Turn(index, tuple(offered), answer, reformulated)
    if notes is not None:
        notes.append(info)
    return turn


def _clean_line(text: str) -> str:
    text = text.strip()
    text = re.sub(r"^(?:reformulated query|query)\s*:\s*", "", text, flags=re.IGNORECASE)
    return text.strip().strip("\"'`").strip()


def _select(state, offered, config, backend, info) -> int:
    bundle = build_response_prompt(Scenario.SELECT, state, offered)
    reply = backend.complete(bundle.messages, config.sampling)
    idx = match_selection(reply, offered)
    if idx is not None:
        return idx
    messages = list(bundle.messages) + [Message(Role.ASSISTANT, reply), Message(Role.USER, SELECTION_CORRECTION)]
    reply2 = backend.complete(messages, config.sampling)
    idx = match_selection(reply2, offered)
    if idx is not None:
        info["selection"] = "corrected"
        return idx
    idx = _lexical_nearest(reply2, offered)
    logger.warning("selection %r matched no offered query; falling back to nearest %r", reply2, offered[idx].text)
    info["selection"] = "nearest-fallback"
    return idx


def simulate_conversation(
    query: Query,
    intent: UserIntent,
    config: SimulationConfig,
    backend: ChatBackend,
    few_shots: Optional[Sequence[FewShotExample]] = None,
    dataset: str = "default",
    extra_provenance: Optional[dict] = None,
) -> RunRecord:
    """Run ``config.max_turns`` turns with no early stopping.

    On failure raises ``SimulationError`` whose ``record`` is the partial run,
    marked ``status="failed"``.
    """
    tracer = _Tracer(backend)
    conv = Conversation(query, intent, config.scenario, config.scheme, (), config.max_turns)
    notes: list = []
    error = None
    while len(conv.turns) < config.max_turns:
        try:
            turn = simulate_turn(conv, config, tracer, few_shots, notes)
        except Exception as exc:  # noqa: BLE001 - any failure aborts the run
            error = f"{type(exc).__name__}: {exc}"
            break
        conv = conv.with_turn(turn)
    provenance = {
        "backend": backend.identity,
        "call_digest": tracer.digest,
        "calls": tracer.calls,
        "status": "ok" if error is None else "failed",
        "turn_notes": notes,
        **(extra_provenance or {}),
    }
    if error is not None:
        provenance["error"] = error
    record = RunRecord(
        config=config,
        conversation=conv,
        per_turn_effective_queries=tuple(effective_query(conv, t) for t in range(len(conv.turns) + 1)),
        provenance=provenance,
        dataset=dataset,
    )
    if error is not None:
        raise SimulationError(error, record)
    return record


class RunStore:
    """Run directory: one JSONL file per conversation plus a manifest of finished keys."""

    MANIFEST = "manifest.jsonl"

    def __init__(self, root, tag: Optional[dict] = None):
        self.root = Path(root)
        self.tag = dict(tag or {})
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._done: set[str] = set()
        manifest = self.root / self.MANIFEST
        if manifest.exists():
            for line in manifest.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._done.add(json.loads(line)["key"])

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.jsonl"

    def has(self, key: str) -> bool:
        return key in self._done and self.path_for(key).exists()

    def save(self, record: RunRecord) -> Path:
        path = self.path_for(record.key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(record.to_json() + "\n", encoding="utf-8")
            if record.ok and record.key not in self._done:
                with (self.root / self.MANIFEST).open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": record.key, **self.tag}, sort_keys=True) + "\n")
                self._done.add(record.key)
        return path

    def load(self, key: str) -> RunRecord:
        return RunRecord.from_dict(json.loads(self.path_for(key).read_text(encoding="utf-8")))

    def records(self) -> list[RunRecord]:
        out = []
        for path in sorted(self.root.rglob("*.jsonl")):
            if path.name == self.MANIFEST:
                continue
            out.append(RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8"))))
        return out


@dataclass
class MatrixResult:
    records: list[RunRecord]
    failures: dict[str, str]
    skipped: int = 0


def simulate_matrix(
    pairs: Iterable[tuple[Query, UserIntent]],
    schemes: Sequence[PromptScheme],
    scenarios: Sequence[Scenario],
    config: SimulationConfig,
    backend: ChatBackend,
    store: Optional[RunStore] = None,
    dataset: str = "default",
    parallelism: int = 1,
    few_shots: Optional[dict] = None,
    resume: bool = True,
    extra_provenance: Optional[dict] = None,
) -> MatrixResult:
    """Simulate every (query-intent pair, scheme, scenario) combination.

    With ``resume``, records already finished in ``store`` are loaded instead
    of re-run.
    Failures are persisted (marked failed) and collected; the batch goes on.
    """
    pairs = list(pairs)
    if not pairs or not schemes or not scenarios:
        raise ValueError("pairs, schemes and scenarios must all be non-empty")
    jobs = []
    for scheme in schemes:
        for scenario in scenarios:
            scenario = Scenario.parse(scenario)
            n = config.n_outputs if scenario is config.scenario else _DEFAULT_N[scenario]
            cfg = replace(config, scheme=PromptScheme.parse(scheme), scenario=Scenario.parse(scenario), n_outputs=n)
            for query, intent in pairs:
                jobs.append((cfg, query, intent))

    def run(job):
        cfg, query, intent = job
        key = record_key(dataset, cfg.scheme, cfg.scenario, query.query_id, intent.intent_id)
        if resume and store is not None and store.has(key):
            return key, store.load(key), None, True
        shots = None if few_shots is None else few_shots.get((cfg.scenario, cfg.scheme))
        try:
            record = simulate_conversation(query, intent, cfg, backend, shots, dataset, extra_provenance)
            err = None
        except SimulationError as exc:
            record, err = exc.record, str(exc)
        if store is not None and record is not None:
            store.save(record)
        return key, record, err, False

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    out = MatrixResult([], {})
    for key, record, err, skipped in results:
        if record is not None:
            out.records.append(record)
        if err is not None:
            out.failures[key] = err
        out.skipped += skipped
    return out
