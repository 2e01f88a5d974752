"""A deterministic stand-in for the chat model.

It recognises the three prompt families by their system text and answers
with well-formed, reproducible replies, so pipelines, the CLI and the demos run
end to end without any model service. It is not meant to be a good clarifier.
"""

from __future__ import annotations

import hashlib
import json
import re

from .core import KIND_ORDER, tokenize
from .llm_backend import SamplingParams, canonical_messages

_FACETS = ("overview", "history", "examples", "cost", "guide", "definition", "reviews", "near me")
_STOP = {"the", "a", "an", "of", "to", "and", "in", "for", "on", "is", "are", "with", "about", "you", "i", "am", "my"}


def _h(*parts) -> int:
    return int(hashlib.sha256("\x1f".join(map(str, parts)).encode()).hexdigest()[:8], 16)


def _last_user(msgs):
    return next(m["content"] for m in reversed(msgs) if m["role"] == "user")


def _current_query(text: str) -> str:
    m = re.search(r"(?:Current query|Query): (.+)$", text, re.MULTILINE)
    return m.group(1).strip() if m else text.strip().splitlines()[-1]


def _content_words(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in _STOP]


class OfflineBackend:
    identity = "offline-v1"

    def __init__(self):
        self.calls = 0

    def complete(self, messages, params: SamplingParams) -> str:
        msgs = canonical_messages(messages)
        self.calls += 1
        system = msgs[0]["content"]
        seed = params.seed or 0
        if system.startswith("Given a query in an information-seeking system"):
            return self._generate(system, _last_user(msgs), seed)
        if "choose the reformulated query" in system:
            return self._select(_last_user(msgs))
        if "respond to the clarification question" in system:
            return self._answer(_last_user(msgs))
        if system.startswith("Given a conversation history, summarize"):
            return self._reformulate(_last_user(msgs))
        return "I am not sure."

    def _generate(self, system: str, user: str, seed: int) -> str:
        n = int(re.search(r"Generate exactly (\d+)", system).group(1))
        query = _current_query(user)
        select = "reformulated quer" in system.split("\n", 1)[0]
        start = _h(query, seed, system) % len(_FACETS)
        facets = [_FACETS[(start + i) % len(_FACETS)] for i in range(n)]
        if select:
            items = [f"{query} {f}" for f in facets]
        else:
            items = [f"Are you looking for {f} information about {query}?" for f in facets]
        obj = {}
        if "your reasoning" in system:
            if "which types of ambiguity apply" in system:
                kinds = [k.value for i, k in enumerate(KIND_ORDER) if (_h(query, k.value) >> i) % 2] or ["Specify"]
                obj["reasoning"] = f"The query '{query}' fits: {', '.join(kinds)}."
                obj["ambiguity_types"] = kinds
            else:
                obj["reasoning"] = f"The query '{query}' is short and could cover several needs."
        obj["clarifications"] = items
        return json.dumps(obj)

    def _select(self, user: str) -> str:
        intent = set(_content_words(user.split("User intent:", 1)[1].split("\n\n")[0]))
        block = user.split("Reformulated queries:\n", 1)[1].split("\n\n")[0]
        options = [re.sub(r"^\d+\.\s*", "", line) for line in block.splitlines() if line.strip()]
        best = max(options, key=lambda o: (len(set(tokenize(o)) & intent), -options.index(o)))
        return best

    def _answer(self, user: str) -> str:
        intent = user.split("User intent:", 1)[1].split("\n\n")[0]
        words = _content_words(intent)[:12]
        return "I am looking for " + " ".join(words) if words else "Yes."

    def _reformulate(self, user: str) -> str:
        history = user.split("Conversation history:\n", 1)[1].split("\n\n")[0]
        user_lines = [l[len("User: "):] for l in history.splitlines() if l.startswith("User: ")]
        asked = [m.group(1) for m in re.finditer(r"looking for (.+?) information", history)]
        words = []
        for line in user_lines[:1] + asked + user_lines[1:]:
            for w in _content_words(line):
                if w not in words and w not in ("looking", "yes"):
                    words.append(w)
        return " ".join(words[:16]) or user_lines[0]
