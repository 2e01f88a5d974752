"""Chat-completion and embedding access.

Three chat backends share one duck-typed surface (``identity`` plus
``complete(messages, params)``): an HTTP client for any chat-completions
compatible service, a scripted backend used as a test oracle, and a caching
wrapper backed by an append-only JSONL file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx

logger = logging.getLogger(__name__)


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}


MessagesLike = Sequence[Union[Message, dict]]


def canonical_messages(messages: MessagesLike) -> list[dict]:
    out = []
    for m in messages:
        if isinstance(m, Message):
            out.append(m.to_dict())
        else:
            out.append({"role": Role(m["role"]).value, "content": m["content"]})
    return out


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.6
    top_k: int = 10
    max_tokens: int = 1024
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingParams":
        return cls(**d)


class ChatBackend(Protocol):
    identity: str

    def complete(self, messages: MessagesLike, params: SamplingParams) -> str: ...


class BackendError(RuntimeError):
    pass


class PermanentError(BackendError):
    """The service rejected the request (HTTP 4xx); retrying will not help."""


class TransportError(BackendError):
    """Timeouts, connection failures or 5xx responses that outlived the retries."""


class ProtocolError(BackendError):
    """The service answered with a payload that violates the wire protocol."""


class ScriptError(BackendError):
    pass


def cache_key(messages: MessagesLike, params: SamplingParams, identity: str) -> str:
    payload = json.dumps(
        {"messages": canonical_messages(messages), "params": params.to_dict(), "backend": identity},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --- HTTP ---------------------------------------------------------------------

ENV_URL = "ATCOT_LLM_URL"
ENV_API_KEY = "ATCOT_LLM_API_KEY"
ENV_MODEL = "ATCOT_LLM_MODEL"
ENV_EMBED_URL = "ATCOT_EMBED_URL"
ENV_EMBED_MODEL = "ATCOT_EMBED_MODEL"


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    api_key: Optional[str] = None
    timeout: float = 120.0
    max_retries: int = 3
    backoff: float = 0.5

    @classmethod
    def from_env(cls, kind: str = "chat", **overrides) -> "EndpointConfig":
        """Build a config from environment variables; keyword overrides win."""
        if kind == "chat":
            values = {"url": os.environ.get(ENV_URL), "model": os.environ.get(ENV_MODEL)}
        else:
            values = {"url": os.environ.get(ENV_EMBED_URL), "model": os.environ.get(ENV_EMBED_MODEL)}
        values["api_key"] = os.environ.get(ENV_API_KEY)
        values.update({k: v for k, v in overrides.items() if v is not None})
        if not values.get("url") or not values.get("model"):
            raise ValueError(f"{kind} endpoint needs a url and a model (set env vars or config)")
        return cls(**values)


def _post_json(client: httpx.Client, config: EndpointConfig, payload: dict,
               on_attempt: Callable[[], None] | None = None) -> dict:
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff * 2 ** (attempt - 1))
        if on_attempt is not None:
            on_attempt()
        try:
            resp = client.post(config.url, json=payload, headers=headers, timeout=config.timeout)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            last_error = exc
            logger.warning("transport failure on attempt %d: %s", attempt + 1, exc)
            continue
        if 400 <= resp.status_code < 500:
            raise PermanentError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        if resp.status_code >= 500:
            last_error = TransportError(f"HTTP {resp.status_code}")
            logger.warning("server error %d on attempt %d", resp.status_code, attempt + 1)
            continue
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {resp.text[:200]}") from exc
    raise TransportError(f"giving up after {config.max_retries + 1} attempts: {last_error}")


class HttpChatBackend:
    """Client for a chat-completions style endpoint.

    ``top_k`` is always transmitted. Services that expose only top-p may
    ignore it; ``top_k_acknowledged`` records whether the last response echoed
    the parameter back (``None`` when it said nothing either way).
    """

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.identity = f"http:{config.model}@{config.url}"
        self._client = httpx.Client(transport=transport)
        self.transport_attempts = 0
        self.top_k_acknowledged: Optional[bool] = None

    def complete(self, messages: MessagesLike, params: SamplingParams) -> str:
        msgs = canonical_messages(messages)
        if not msgs:
            raise ValueError("messages must be non-empty")
        payload = {
            "model": self.config.model,
            "messages": msgs,
            "temperature": params.temperature,
            "top_k": params.top_k,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        data = _post_json(self._client, self.config, payload, on_attempt=self._count_attempt)
        if "top_k" in data:
            self.top_k_acknowledged = True
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"no assistant content in response: {str(data)[:200]}") from exc
        if not isinstance(content, str):
            raise ProtocolError("assistant content is not a string")
        return content

    def _count_attempt(self) -> None:
        self.transport_attempts += 1

    def close(self) -> None:
        self._client.close()


def http_complete(config: EndpointConfig, messages: MessagesLike, params: SamplingParams,
                  transport: httpx.BaseTransport | None = None) -> str:
    return HttpChatBackend(config, transport=transport).complete(messages, params)


class EmbeddingClient:
    """Client for an embeddings endpoint: ``{model, input: [str]}`` -> vectors.

    Accepts either a bare list of float arrays or the common
    ``{"data": [{"embedding": [...]}, ...]}`` envelope.
    """

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.identity = f"embed:{config.model}@{config.url}"
        self._client = httpx.Client(transport=transport)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not isinstance(t, str) or not t for t in texts):
            raise ValueError("every text must be a non-empty string")
        data = _post_json(self._client, self.config, {"model": self.config.model, "input": texts})
        return _parse_vectors(data, len(texts))


def _parse_vectors(data, n: int) -> list[list[float]]:
    if isinstance(data, dict):
        if "data" in data:
            data = [item["embedding"] for item in sorted(data["data"], key=lambda x: x.get("index", 0))]
        elif "embeddings" in data:
            data = data["embeddings"]
    if not isinstance(data, list) or len(data) != n:
        raise ProtocolError(f"expected {n} vectors")
    vectors = [[float(x) for x in v] for v in data]
    dims = {len(v) for v in vectors}
    if len(dims) != 1 or 0 in dims:
        raise ProtocolError(f"inconsistent embedding dimensions: {sorted(dims)}")
    return vectors


def embed(config: EndpointConfig, texts: Sequence[str], transport: httpx.BaseTransport | None = None):
    return EmbeddingClient(config, transport=transport).embed(texts)


# --- Scripted -----------------------------------------------------------------

class ScriptedBackend:
    """Deterministic backend replaying canned replies.

    Queue mode (``replies`` is a list) pops replies in order and is meant for a
    single consumer. Map mode (``replies`` is a dict) looks replies up by the
    cache key of the request, computed with this backend's identity.

    Every call is appended to ``calls`` so tests can inspect prompts.
    """

    def __init__(self, replies: Union[Sequence[str], dict], identity: str = "scripted"):
        self.identity = identity
        self._lock = threading.Lock()
        if isinstance(replies, dict):
            self._map = dict(replies)
            self._queue = None
        else:
            self._map = None
            self._queue = deque(replies)
        self.calls: list[list[dict]] = []

    def complete(self, messages: MessagesLike, params: SamplingParams) -> str:
        msgs = canonical_messages(messages)
        with self._lock:
            self.calls.append(msgs)
            if self._queue is not None:
                if not self._queue:
                    raise ScriptError("scripted reply queue is exhausted")
                return self._queue.popleft()
        key = cache_key(msgs, params, self.identity)
        try:
            return self._map[key]
        except KeyError:
            raise ScriptError(f"no scripted reply for key {key[:12]}") from None

    @property
    def remaining(self) -> int:
        return len(self._queue) if self._queue is not None else len(self._map)


def scripted_complete(script: Union[Sequence[str], dict], messages: MessagesLike, params: SamplingParams) -> str:
    return ScriptedBackend(script).complete(messages, params)


class FunctionBackend:
    """Backend answering through a plain callable; handy for rule-driven fakes."""

    def __init__(self, fn: Callable[[list[dict], SamplingParams], str], identity: str = "function"):
        self.fn = fn
        self.identity = identity
        self.calls: list[list[dict]] = []
        self._lock = threading.Lock()

    def complete(self, messages: MessagesLike, params: SamplingParams) -> str:
        msgs = canonical_messages(messages)
        with self._lock:
            self.calls.append(msgs)
        return self.fn(msgs, params)


# --- Cache --------------------------------------------------------------------

class MemoryStore:
    def __init__(self):
        self._data: dict[str, str] = {}

    def get(self, key: str) -> Optional[str]:
        return self._data.get(key)

    def put(self, key: str, reply: str) -> None:
        self._data[key] = reply

    def __len__(self):
        return len(self._data)


class FileStore:
    """Append-only JSONL file of ``{"key", "reply"}`` records plus an in-memory map.

    A torn final line (crash mid-write) is skipped on load.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["reply"]
                    except (ValueError, KeyError):
                        logger.warning("skipping corrupt cache line %d in %s", lineno, self.path)

    def get(self, key: str) -> Optional[str]:
        return self._data.get(key)

    def put(self, key: str, reply: str) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "reply": reply}, ensure_ascii=False) + "\n")
            self._data[key] = reply

    def __len__(self):
        return len(self._data)


class CachedBackend:
    def __init__(self, inner: ChatBackend, store):
        self.inner = inner
        self.store = store
        # same identity as the wrapped backend so nested caches share keys
        self.identity = inner.identity
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def complete(self, messages: MessagesLike, params: SamplingParams) -> str:
        key = cache_key(messages, params, self.identity)
        try:
            hit = self.store.get(key)
        except OSError as exc:
            logger.warning("cache read failed, passing through: %s", exc)
            hit = None
        if hit is not None:
            with self._lock:
                self.hits += 1
            return hit
        reply = self.inner.complete(messages, params)
        with self._lock:
            self.misses += 1
            try:
                self.store.put(key, reply)
            except OSError as exc:
                logger.warning("cache write failed, passing through: %s", exc)
        return reply


def cached(backend: ChatBackend, store=None) -> CachedBackend:
    return CachedBackend(backend, MemoryStore() if store is None else store)
