from __future__ import annotations

import json

import httpx
import numpy as np
import pytest

from guiplay.llm import (
    ChatRequest,
    LiveBackend,
    LLMProvider,
    LLMSession,
    Message,
    MockBackend,
    MockEntry,
    MockExhausted,
    MockMismatch,
    TransportError,
    dump_script,
    load_script,
)
from guiplay.trajectory import Trajectory, load


def test_mock_replays_in_order_with_tokens():
    be = MockBackend([MockEntry("a", tokens_in=3, tokens_out=1), MockEntry("bbbbbbbb")])
    req = ChatRequest([Message("user", "x" * 40)])
    first = be.complete(req)
    assert (first.text, first.tokens_in, first.tokens_out) == ("a", 3, 1)
    second = be.complete(req)
    assert second.tokens_out == 2
    with pytest.raises(MockExhausted):
        be.complete(req)


def test_mock_match_guard():
    be = MockBackend([MockEntry("ok", match="step 1")])
    with pytest.raises(MockMismatch):
        be.complete(ChatRequest([Message("user", "step 2")]))


def test_script_roundtrip(tmp_path):
    entries = [MockEntry("r1", None, 5, 6), MockEntry("r2", "m")]
    dump_script(entries, tmp_path / "s.jsonl")
    assert load_script(tmp_path / "s.jsonl") == entries
    (tmp_path / "bad.jsonl").write_text('{"nope": 1}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        load_script(tmp_path / "bad.jsonl")


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest([])
    with pytest.raises(ValueError):
        ChatRequest([Message("user", "x")], temperature=3.0)
    with pytest.raises(ValueError):
        Message("robot", "x")


class Flaky:
    name = "flaky"

    def __init__(self, failures):
        self.failures = failures

    def complete(self, request):
        if self.failures:
            self.failures -= 1
            raise TransportError("connection reset")
        return MockBackend([MockEntry("done", tokens_in=2, tokens_out=3)]).complete(request)


def test_session_retries_with_backoff(tmp_path):
    sleeps = []
    with Trajectory(tmp_path) as t:
        s = LLMSession(Flaky(2), t, "tester", sleep=sleeps.append)
        assert s.complete([Message("user", "hi")]).text == "done"
    assert sleeps == [1.0, 2.0]
    assert s.total_tokens == 5
    (event,) = load(tmp_path)
    assert event.payload["tokens_in"] == 2 and event.payload["role"] == "tester"


def test_session_gives_up_after_three_retries():
    sleeps = []
    s = LLMSession(Flaky(4), sleep=sleeps.append)
    with pytest.raises(TransportError):
        s.complete([Message("user", "hi")])
    assert sleeps == [1.0, 2.0, 4.0]


def test_live_backend_payload_and_usage():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "press(up)"}}], "usage": {"prompt_tokens": 11, "completion_tokens": 4}})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    be = LiveBackend("http://llm.local/v1/", "k3y", "m1", client)
    img = np.zeros((4, 4, 4), dtype=np.uint8)
    out = be.complete(ChatRequest([Message("system", "s"), Message("user", "look", (img,))]))
    assert (out.text, out.tokens_in, out.tokens_out) == ("press(up)", 11, 4)
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["auth"] == "Bearer k3y"
    body = seen["body"]
    assert body["model"] == "m1" and body["temperature"] == 0.3
    parts = body["messages"][1]["content"]
    assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_live_backend_http_error():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503, text="busy")))
    with pytest.raises(TransportError, match="503"):
        LiveBackend("http://x", client=client).complete(ChatRequest([Message("user", "u")]))


def test_provider_lookup_order(tmp_path):
    (tmp_path / "t1").mkdir()
    for name in ("t1/tester-5.jsonl", "t1/tester.jsonl", "tester.jsonl"):
        dump_script([MockEntry(name)], tmp_path / name)
    p = LLMProvider(f"mock:{tmp_path}")
    assert p.script_path("tester", "t1", 5).name == "tester-5.jsonl"
    assert p.script_path("tester", "t1", 6).name == "tester.jsonl"
    assert p.script_path("tester", "t2", 6) == tmp_path / "tester.jsonl"
    with pytest.raises(FileNotFoundError):
        p.script_path("developer", "t1")
    s1, s2 = p.session("tester", "t1", 5), p.session("tester", "t1", 5)
    req = [Message("user", "x")]
    assert s1.complete(req).text == s2.complete(req).text == "t1/tester-5.jsonl"
