import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest
from hypothesis import given, strategies as st

from atcot.llm_backend import (
    CachedBackend,
    EmbeddingClient,
    EndpointConfig,
    FileStore,
    HttpChatBackend,
    MemoryStore,
    Message,
    PermanentError,
    ProtocolError,
    Role,
    SamplingParams,
    ScriptedBackend,
    ScriptError,
    TransportError,
    cache_key,
    cached,
)

MSGS = [Message(Role.SYSTEM, "sys"), Message(Role.USER, "hello")]
P = SamplingParams()


def chat_reply(content, **extra):
    return {"choices": [{"message": {"role": "assistant", "content": content}}], **extra}


def config(**kw):
    base = dict(url="http://llm.test/v1/chat/completions", model="m", backoff=0.0)
    base.update(kw)
    return EndpointConfig(**base)


def test_sampling_defaults_and_validation():
    assert (P.temperature, P.top_k, P.max_tokens) == (0.6, 10, 1024)
    for bad in ({"temperature": -1}, {"top_k": 0}, {"max_tokens": 0}):
        with pytest.raises(ValueError):
            SamplingParams(**bad)


def test_cache_key_sensitivity():
    k = cache_key(MSGS, P, "a")
    assert k == cache_key([m.to_dict() for m in MSGS], P, "a")
    assert k != cache_key(MSGS, P, "b")
    assert k != cache_key(MSGS, SamplingParams(temperature=0.7), "a")
    assert k != cache_key(MSGS[:1] + [Message(Role.USER, "hello!")], P, "a")


@given(st.text(), st.text())
def test_cache_key_separates_message_boundaries(a, b):
    one = [{"role": "user", "content": a + b}]
    two = [{"role": "user", "content": a}, {"role": "user", "content": b}]
    assert cache_key(one, P, "x") != cache_key(two, P, "x")


def test_http_payload_and_parse():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["Authorization"] == "Bearer k"
        return httpx.Response(200, json=chat_reply("hi there"))

    backend = HttpChatBackend(config(api_key="k"), transport=httpx.MockTransport(handler))
    assert backend.complete(MSGS, SamplingParams(seed=3)) == "hi there"
    body = seen[0]
    assert body["top_k"] == 10 and body["temperature"] == 0.6 and body["max_tokens"] == 1024 and body["seed"] == 3
    assert body["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "hello"}]
    assert backend.top_k_acknowledged is None


def test_http_retries_5xx_then_succeeds():
    codes = iter([503, 500, 200])

    def handler(request):
        code = next(codes)
        return httpx.Response(code, json=chat_reply("ok") if code == 200 else {"error": "busy"})

    backend = HttpChatBackend(config(max_retries=3), transport=httpx.MockTransport(handler))
    assert backend.complete(MSGS, P) == "ok"
    assert backend.transport_attempts == 3


def test_http_gives_up_after_retries():
    backend = HttpChatBackend(config(max_retries=2), transport=httpx.MockTransport(lambda r: httpx.Response(502)))
    with pytest.raises(TransportError):
        backend.complete(MSGS, P)
    assert backend.transport_attempts == 3


def test_http_4xx_is_permanent():
    backend = HttpChatBackend(config(max_retries=5), transport=httpx.MockTransport(lambda r: httpx.Response(400, text="bad")))
    with pytest.raises(PermanentError):
        backend.complete(MSGS, P)
    assert backend.transport_attempts == 1


def test_http_protocol_errors():
    backend = HttpChatBackend(config(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"x": 1})))
    with pytest.raises(ProtocolError):
        backend.complete(MSGS, P)
    backend = HttpChatBackend(config(), transport=httpx.MockTransport(lambda r: httpx.Response(200, text="<html>")))
    with pytest.raises(ProtocolError):
        backend.complete(MSGS, P)


def test_http_transport_failure_retried():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json=chat_reply("fine", top_k=10))

    backend = HttpChatBackend(config(), transport=httpx.MockTransport(handler))
    assert backend.complete(MSGS, P) == "fine"
    assert backend.top_k_acknowledged is True


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if "input" in body:
            payload = {"data": [{"index": i, "embedding": [float(len(t)), 1.0]} for i, t in enumerate(body["input"])]}
        else:
            payload = chat_reply("echo: " + body["messages"][-1]["content"])
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def test_real_http_stub_chat_and_embeddings(stub_server):
    backend = HttpChatBackend(config(url=stub_server + "/chat"))
    assert backend.complete(MSGS, P) == "echo: hello"
    vecs = EmbeddingClient(config(url=stub_server + "/embed")).embed(["ab", "abcd"])
    assert vecs == [[2.0, 1.0], [4.0, 1.0]]


def test_embedding_shapes():
    client = EmbeddingClient(config(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json=[[1, 2], [3]])))
    with pytest.raises(ProtocolError):
        client.embed(["a", "b"])
    client = EmbeddingClient(config(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"embeddings": [[1, 2]]})))
    assert client.embed(["a"]) == [[1.0, 2.0]]
    with pytest.raises(ValueError):
        client.embed([])


def test_from_env(monkeypatch):
    monkeypatch.setenv("ATCOT_LLM_URL", "http://env")
    monkeypatch.setenv("ATCOT_LLM_MODEL", "env-model")
    cfg = EndpointConfig.from_env("chat", model="override")
    assert (cfg.url, cfg.model) == ("http://env", "override")
    monkeypatch.delenv("ATCOT_LLM_URL")
    with pytest.raises(ValueError):
        EndpointConfig.from_env("chat")


def test_scripted_queue_and_map():
    b = ScriptedBackend(["a", "b"])
    assert [b.complete(MSGS, P), b.complete(MSGS, P)] == ["a", "b"]
    with pytest.raises(ScriptError):
        b.complete(MSGS, P)
    key = cache_key(MSGS, P, "scripted")
    m = ScriptedBackend({key: "mapped"})
    assert m.complete(MSGS, P) == "mapped"
    with pytest.raises(ScriptError):
        m.complete(MSGS[:1], P)


def test_cached_backend_memory():
    inner = ScriptedBackend(["first", "second"])
    c = cached(inner)
    assert c.complete(MSGS, P) == "first"
    assert c.complete(MSGS, P) == "first"
    assert (c.hits, c.misses, len(inner.calls)) == (1, 1, 1)
    assert c.identity == inner.identity


def test_file_store_persists_and_skips_corrupt_lines(tmp_path):
    path = tmp_path / "cache.jsonl"
    c = CachedBackend(ScriptedBackend(["x"]), FileStore(path))
    c.complete(MSGS, P)
    with path.open("a") as fh:
        fh.write("{not json\n")
    again = CachedBackend(ScriptedBackend([]), FileStore(path))
    assert again.complete(MSGS, P) == "x"
    assert again.hits == 1


def test_cache_failure_degrades_to_passthrough():
    class Broken(MemoryStore):
        def get(self, key):
            raise OSError("disk gone")

        def put(self, key, reply):
            raise OSError("disk gone")

    c = CachedBackend(ScriptedBackend(["live"]), Broken())
    assert c.complete(MSGS, P) == "live"
