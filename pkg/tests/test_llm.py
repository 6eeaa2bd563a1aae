"""LLM layer: scripted stub semantics, token counting, and the wire client."""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ragmux.llm import (
    ApiError,
    LlmRequest,
    LlmUsage,
    OpenAiChatLlm,
    ScriptedLlm,
    TrackedLlm,
    TransportError,
    UnscriptedPromptError,
    build_llm,
    count_tokens,
    load_stub_script,
)


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_whitespace_runs(self):
        assert count_tokens("a b  c") == 3

    def test_paragraph_matches_independent_recount(self):
        paragraph = (
            "Parallel retrieval across sources\nfeeds a unified pool;  selectors\t"
            "then rank and truncate to the final budget."
        )
        assert count_tokens(paragraph) == len(re.findall(r"\S+", paragraph))


class TestScriptedLlm:
    def test_first_matching_rule_wins(self):
        stub = ScriptedLlm(rules=[("routing assistant", "wiki"), ("routing", "never")])
        reply = stub.complete(LlmRequest(system="", user="You are a routing assistant. Pick."))
        assert reply.text == "wiki"

    def test_queue_fallback_is_fifo(self):
        stub = ScriptedLlm(queue=["first", "second"])
        assert stub.complete(LlmRequest(system="", user="x")).text == "first"
        assert stub.complete(LlmRequest(system="", user="x")).text == "second"

    def test_unscripted_prompt_raises(self):
        stub = ScriptedLlm(rules=[("nope", "never")])
        with pytest.raises(UnscriptedPromptError):
            stub.complete(LlmRequest(system="", user="uncovered"))

    def test_calls_are_recorded(self):
        stub = ScriptedLlm(rules=[("", "ok")])
        stub.complete(LlmRequest(system="sys", user="one"))
        stub.complete(LlmRequest(system="sys", user="two"))
        assert [c.user for c in stub.calls] == ["one", "two"]

    def test_usage_is_local_token_count(self):
        stub = ScriptedLlm(rules=[("", "three word reply")])
        reply = stub.complete(LlmRequest(system="a b", user="c d e f g"))
        assert reply.usage.prompt_tokens == 7
        assert reply.usage.completion_tokens == 3

    def test_replay_determinism(self):
        requests = [LlmRequest(system="", user=f"q{i}") for i in range(4)]
        replies1 = [ScriptedLlm(rules=[("q1", "one"), ("", "rest")]).complete(r).text for r in requests]
        replies2 = [ScriptedLlm(rules=[("q1", "one"), ("", "rest")]).complete(r).text for r in requests]
        assert replies1 == replies2


class TestTrackedLlm:
    def test_accumulates_usage_and_counts_calls(self):
        stub = ScriptedLlm(rules=[("", "one two")])
        tracked = TrackedLlm(stub)
        tracked.complete(LlmRequest(system="", user="a b c"))
        tracked.complete(LlmRequest(system="", user="d"))
        assert tracked.call_count == 2
        assert tracked.total == LlmUsage(prompt_tokens=4, completion_tokens=4)


class _WireServer:
    """Tiny scripted HTTP backend; records request payloads."""

    def __init__(self, responses: list[tuple[int, str]]):
        self.responses = list(responses)
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                outer.requests.append(json.loads(self.rfile.read(length)))
                outer.headers.append(dict(self.headers))
                status, body = (
                    outer.responses.pop(0) if outer.responses else outer.last_response
                )
                outer.last_response = (status, body)
                payload = body.encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.last_response = responses[-1] if responses else (500, "{}")
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_port}/v1"

    def stop(self):
        self.server.shutdown()
        self.server.server_close()


def _ok_body(text: str, usage: dict | None = None) -> str:
    body = {"choices": [{"message": {"content": text}}]}
    if usage is not None:
        body["usage"] = usage
    return json.dumps(body)


@pytest.fixture
def wire():
    servers = []

    def start(responses):
        server = _WireServer(responses)
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.stop()


class TestOpenAiChatLlm:
    def test_success_uses_provider_usage(self, wire):
        server = wire([(200, _ok_body("Paris", {"prompt_tokens": 11, "completion_tokens": 2}))])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        reply = client.complete(LlmRequest(system="sys", user="Where is the tower?"))
        assert reply.text == "Paris"
        assert reply.usage == LlmUsage(11, 2)

    def test_request_payload_shape(self, wire):
        server = wire([(200, _ok_body("x"))])
        client = OpenAiChatLlm(server.url, model="test-model", backoff=0.0)
        client.complete(LlmRequest(system="sys", user="hello", temperature=0.0, max_output=64))
        payload = server.requests[0]
        assert payload["model"] == "test-model"
        assert payload["temperature"] == 0.0
        assert payload["max_tokens"] == 64
        assert payload["messages"] == [
            {"role": "system", "content": "sys"},
            {"role": "user", "content": "hello"},
        ]

    def test_api_key_header_from_environment(self, wire, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-123")
        server = wire([(200, _ok_body("x"))])
        client = OpenAiChatLlm(server.url, model="m", api_key_env="TEST_LLM_KEY", backoff=0.0)
        client.complete(LlmRequest(system="", user="q"))
        assert server.headers[0].get("Authorization") == "Bearer sk-123"

    def test_retries_5xx_then_succeeds(self, wire):
        server = wire([(500, "{}"), (200, _ok_body("ok"))])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        assert client.complete(LlmRequest(system="", user="q")).text == "ok"
        assert len(server.requests) == 2

    def test_exhausted_retries_raise_transport_error(self, wire):
        server = wire([(500, "{}")])
        client = OpenAiChatLlm(server.url, model="m", max_attempts=3, backoff=0.0)
        with pytest.raises(TransportError):
            client.complete(LlmRequest(system="", user="q"))
        assert len(server.requests) == 3

    def test_429_is_retryable(self, wire):
        server = wire([(429, "{}"), (200, _ok_body("ok"))])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        assert client.complete(LlmRequest(system="", user="q")).text == "ok"

    def test_4xx_is_non_retryable_api_error(self, wire):
        server = wire([(404, '{"error": "no such model"}')])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        with pytest.raises(ApiError) as exc_info:
            client.complete(LlmRequest(system="", user="q"))
        assert exc_info.value.status == 404
        assert len(server.requests) == 1

    def test_malformed_body_raises_api_error(self, wire):
        server = wire([(200, '{"weird": true}')])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        with pytest.raises(ApiError):
            client.complete(LlmRequest(system="", user="q"))

    def test_missing_usage_falls_back_to_local_count(self, wire):
        server = wire([(200, _ok_body("two words"))])
        client = OpenAiChatLlm(server.url, model="m", backoff=0.0)
        reply = client.complete(LlmRequest(system="one two", user="three four five"))
        assert reply.usage == LlmUsage(prompt_tokens=5, completion_tokens=2)

    def test_unreachable_endpoint_raises_transport_error(self):
        client = OpenAiChatLlm(
            "http://127.0.0.1:9", model="m", max_attempts=2, backoff=0.0, timeout=0.5
        )
        with pytest.raises(TransportError):
            client.complete(LlmRequest(system="", user="q"))


class TestBuildLlm:
    def test_stub_from_inline_rules(self):
        llm = build_llm({"backend": "stub", "rules": [["hi", "hello"]]})
        assert isinstance(llm, ScriptedLlm)
        assert llm.complete(LlmRequest(system="", user="hi there")).text == "hello"

    def test_stub_from_script_file(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps({"rules": [["a", "b"]], "queue": ["c"]}))
        llm = load_stub_script(script)
        assert llm.complete(LlmRequest(system="", user="has a here")).text == "b"
        assert llm.complete(LlmRequest(system="", user="zzz")).text == "c"

    def test_openai_backend_fields(self):
        llm = build_llm(
            {"backend": "openai", "base_url": "http://x/v1", "model": "m", "timeout": 5}
        )
        assert isinstance(llm, OpenAiChatLlm)
        assert llm.base_url == "http://x/v1"
        assert llm.model == "m"

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            build_llm({"backend": "other"})
