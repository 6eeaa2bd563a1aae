"""LLM access layer.

Two interchangeable backends expose a single ``complete(request)`` method:
``OpenAiChatLlm`` speaks the OpenAI-compatible chat-completions wire protocol
over HTTP, and ``ScriptedLlm`` is a deterministic offline stub for tests and
demos. Token usage is taken from the provider response when available and
falls back to a local whitespace count otherwise.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests


def count_tokens(text: str) -> int:
    """Whitespace token count; the coarse local fallback for usage accounting."""
    return len(text.split())


@dataclass(frozen=True)
class LlmRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_output: int = 1024

    def prompt_text(self) -> str:
        if self.system:
            return self.system + "\n" + self.user
        return self.user


@dataclass(frozen=True)
class LlmUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "LlmUsage") -> "LlmUsage":
        return LlmUsage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
        )


@dataclass(frozen=True)
class LlmReply:
    text: str
    usage: LlmUsage


class LlmError(Exception):
    """Base class for all LLM backend failures."""


class TransportError(LlmError):
    """Network-level failure (or retryable HTTP status) after bounded retries."""


class ApiError(LlmError):
    """Non-retryable provider error (HTTP 4xx other than 429, malformed body)."""

    def __init__(self, status: int, message: str) -> None:
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class UnscriptedPromptError(LlmError):
    """A scripted stub received a prompt no rule or queue entry covers."""


# What pipeline fallbacks catch. UnscriptedPromptError is deliberately not
# here: an uncovered stub prompt is a fixture bug and must surface loudly.
WIRE_ERRORS = (TransportError, ApiError)


class ScriptedLlm:
    """Deterministic stub backend.

    ``rules`` is an ordered list of (pattern, reply) pairs matched by substring
    against the full prompt text, first match wins. ``queue`` is an optional
    FIFO of replies consumed when no rule matches, for stateful scenarios such
    as reflection retries. A prompt that matches neither raises
    :class:`UnscriptedPromptError` so fixture bugs surface loudly.
    """

    def __init__(
        self,
        rules: Iterable[tuple[str, str]] = (),
        queue: Iterable[str] = (),
    ) -> None:
        self.rules = [(pattern, reply) for pattern, reply in rules]
        self._queue: deque[str] = deque(queue)
        self.calls: list[LlmRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: LlmRequest) -> LlmReply:
        prompt = request.prompt_text()
        with self._lock:
            self.calls.append(request)
            reply_text = None
            for pattern, reply in self.rules:
                if pattern in prompt:
                    reply_text = reply
                    break
            if reply_text is None:
                if self._queue:
                    reply_text = self._queue.popleft()
                else:
                    raise UnscriptedPromptError(
                        f"no scripted reply for prompt starting: {prompt[:120]!r}"
                    )
        usage = LlmUsage(
            prompt_tokens=count_tokens(prompt),
            completion_tokens=count_tokens(reply_text),
        )
        return LlmReply(text=reply_text, usage=usage)


class OpenAiChatLlm:
    """Chat-completions client for OpenAI-compatible HTTP endpoints.

    Retries transport failures and HTTP 5xx/429 up to ``max_attempts`` with
    exponential backoff; other 4xx statuses raise :class:`ApiError`
    immediately. The API key is read from ``api_key_env`` at request time,
    never stored in configuration files.
    """

    RETRYABLE_STATUSES = frozenset({429})

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff

    def complete(self, request: LlmRequest) -> LlmReply:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        url = f"{self.base_url}/chat/completions"
        last_error: LlmError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if response.status_code == 200:
                return self._parse(response, request)
            if response.status_code >= 500 or response.status_code in self.RETRYABLE_STATUSES:
                last_error = TransportError(
                    f"HTTP {response.status_code}: {response.text[:200]}"
                )
                continue
            raise ApiError(response.status_code, response.text[:500])
        assert last_error is not None
        raise last_error

    def _parse(self, response: requests.Response, request: LlmRequest) -> LlmReply:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ApiError(response.status_code, f"malformed response body: {exc}")
        if text is None:
            text = ""
        usage = body.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None:
            prompt_tokens = count_tokens(request.prompt_text())
        if completion_tokens is None:
            completion_tokens = count_tokens(text)
        return LlmReply(
            text=text,
            usage=LlmUsage(int(prompt_tokens), int(completion_tokens)),
        )


class TrackedLlm:
    """Per-run proxy that accumulates usage and counts calls."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.total = LlmUsage()
        self.call_count = 0
        self._lock = threading.Lock()

    def complete(self, request: LlmRequest) -> LlmReply:
        reply = self.inner.complete(request)
        with self._lock:
            self.total = self.total + reply.usage
            self.call_count += 1
        return reply


def load_stub_script(path: str | Path) -> ScriptedLlm:
    """Build a ScriptedLlm from a JSON file: {"rules": [[pattern, reply], ...], "queue": [...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = [(str(p), str(r)) for p, r in data.get("rules", [])]
    queue = [str(r) for r in data.get("queue", [])]
    return ScriptedLlm(rules=rules, queue=queue)


def build_llm(config: dict):
    """Construct a backend from a configuration mapping.

    ``{"backend": "openai", "base_url": ..., "model": ..., "api_key_env": ...}``
    or ``{"backend": "stub", "script": path}`` /
    ``{"backend": "stub", "rules": [...], "queue": [...]}``.
    """
    backend = config.get("backend", "openai")
    if backend == "stub":
        if "script" in config:
            return load_stub_script(config["script"])
        rules = [(str(p), str(r)) for p, r in config.get("rules", [])]
        queue = [str(r) for r in config.get("queue", [])]
        return ScriptedLlm(rules=rules, queue=queue)
    if backend == "openai":
        return OpenAiChatLlm(
            base_url=config.get("base_url", "https://api.openai.com/v1"),
            model=config.get("model", "gpt-4o-mini"),
            api_key_env=config.get("api_key_env", "OPENAI_API_KEY"),
            timeout=float(config.get("timeout", 60.0)),
            max_attempts=int(config.get("max_attempts", 3)),
            backoff=float(config.get("backoff", 0.5)),
        )
    raise ValueError(f"unknown llm backend: {backend!r}")
