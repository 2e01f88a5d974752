"""Shared test doubles: a scripted chat function that understands the prompt families."""

from __future__ import annotations

import json
import re
from pathlib import Path

from atcot.llm_backend import FunctionBackend

TOY = Path(__file__).resolve().parents[1] / "demos" / "data" / "toy"
TOY_CONFIG = TOY.parents[1] / "toy.yaml"


def _last_user(messages):
    return next(m["content"] for m in reversed(messages) if m["role"] == "user")


def script_reply(messages, params) -> str:
    """Deterministic replies keyed on the system text of each prompt family."""
    system, user = messages[0]["content"], _last_user(messages)
    if system.startswith("Given a query in an information-seeking system"):
        n = int(re.search(r"Generate exactly (\d+)", system).group(1))
        query = re.search(r"(?:Current query|Query): (.+)$", user, re.M).group(1)
        obj = {"clarifications": [f"{query} option {i}" for i in range(1, n + 1)]}
        if "your reasoning" in system:
            obj["reasoning"] = "Semantic ambiguity: the query has several senses."
        if "which types of ambiguity apply" in system:
            obj["ambiguity_types"] = ["Semantic"]
        return json.dumps(obj)
    if "choose the reformulated query" in system:
        return "2"
    if "respond to the clarification question" in system:
        return "Yes, the second sense."
    if system.startswith("Given a conversation history, summarize"):
        history = user.split("Conversation history:\n", 1)[1]
        first = history.splitlines()[0][len("User: "):]
        return f"Reformulated query: {first} second sense"
    raise AssertionError(f"unexpected prompt: {system[:60]}")


def scripted_backend() -> FunctionBackend:
    """Fresh rule-driven backend; ``.calls`` holds every prompt it received."""
    return FunctionBackend(script_reply, "scripted-fn")


def toy_config(tmp_path: Path, **extra) -> Path:
    """Write a config for the toy dataset whose outputs land under ``tmp_path``."""
    import yaml

    cfg = {
        "datasets": {"toy": {
            "cg": {"path": str(TOY / "cg.jsonl"), "format": "jsonl"},
            "ir": {
                "queries": str(TOY / "queries.jsonl"),
                "intents": str(TOY / "intents.jsonl"),
                "qrels": str(TOY / "qrels.txt"),
                "corpus": str(TOY / "corpus.jsonl"),
                "facets": True,
            },
        }},
        "backend": {"type": "offline"},
        "out": str(tmp_path / "out"),
        "seed": 0,
    }
    cfg.update(extra)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path
