"""Chat-completion contract with two backends: remote HTTP and scripted mock.

Every LLM call in the package goes through ``complete``; nothing else
touches a network endpoint. The mock backend replays canned responses so
agent loops and benchmarks run fully offline and deterministically.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AuthError,
    BackendUnavailableError,
    MockExhaustedError,
    ParseError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")

GENERATION_TEMPERATURE = 0.2
VALIDATION_TEMPERATURE = 0.0


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend: str
    latency_ms: float
    truncated: bool = False


def complete(
    backend,
    messages: list[ChatMessage],
    *,
    temperature: float = GENERATION_TEMPERATURE,
    max_tokens: int | None = None,
    seed: int | None = None,
) -> CompletionResult:
    """Run one chat completion after checking the message-shape contract."""
    if not messages:
        raise ValueError("at least one message required")
    if messages[0].role != "system":
        raise ValueError("first message must have role 'system'")
    for m in messages:
        if m.role not in ROLES:
            raise ValueError(f"unknown role {m.role!r}")
        if m.role in ("system", "user") and not m.content:
            raise ValueError(f"{m.role} message content must be non-empty")
    return backend.complete(messages, temperature=temperature, max_tokens=max_tokens, seed=seed)


@dataclass
class MockResponse:
    text: str
    tag: str | None = None


@dataclass
class MockScript:
    """Canned responses: tagged entries act as a persistent registry matched
    against the last user message; untagged entries are consumed in order."""

    responses: list[MockResponse] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data) -> "MockScript":
        if not isinstance(data, dict) or "responses" not in data:
            raise ParseError("mock script must be an object with a 'responses' array")
        entries = data["responses"]
        if not isinstance(entries, list):
            raise ParseError("'responses' must be an array")
        responses = []
        for i, entry in enumerate(entries):
            if isinstance(entry, str):
                responses.append(MockResponse(text=entry))
            elif isinstance(entry, dict) and isinstance(entry.get("text"), str):
                tag = entry.get("tag")
                if tag is not None and not isinstance(tag, str):
                    raise ParseError(f"responses[{i}].tag must be a string")
                responses.append(MockResponse(text=entry["text"], tag=tag))
            else:
                raise ParseError(f"responses[{i}] must be a string or an object with 'text'")
        return cls(responses=responses)


def load_mock_script(path: str | Path) -> MockScript:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return MockScript.from_dict(data)


class MockChatBackend:
    """Deterministic completion backend driven by a MockScript."""

    def __init__(self, script: MockScript):
        self.id = "mock"
        self._tagged = [r for r in script.responses if r.tag]
        self._queue = [r for r in script.responses if not r.tag]
        self._lock = threading.Lock()

    def complete(self, messages, *, temperature=0.0, max_tokens=None, seed=None):
        last_user = ""
        for m in reversed(messages):
            if m.role == "user":
                last_user = m.content
                break
        with self._lock:
            for resp in self._tagged:
                if resp.tag and resp.tag in last_user:
                    return CompletionResult(text=resp.text, backend=self.id, latency_ms=0.0)
            if not self._queue:
                raise MockExhaustedError("mock script has no remaining untagged responses")
            resp = self._queue.pop(0)
        return CompletionResult(text=resp.text, backend=self.id, latency_ms=0.0)


class HttpChatBackend:
    """Chat-completions endpoint client (vendor-neutral wire shape).

    Transient transport failures and 5xx responses are retried up to 2
    times with exponential backoff; 401/403 raise AuthError immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        timeout_s: float = 120.0,
        retry_backoff_s: float = 0.5,
        transport=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.retry_backoff_s = retry_backoff_s
        self.id = f"http:{model}"
        self._transport = transport

    @classmethod
    def from_env(cls) -> "HttpChatBackend":
        base = os.environ.get("LLM_BASE_URL", "")
        model = os.environ.get("LLM_MODEL", "")
        if not base or not model:
            raise BackendUnavailableError("LLM_BASE_URL and LLM_MODEL must be set")
        return cls(base_url=base, model=model)

    def complete(self, messages, *, temperature=0.2, max_tokens=None, seed=None):
        import httpx  # deferred: keep worker startup light

        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        if seed is not None:
            payload["seed"] = seed
        headers = {}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

        last_error: Exception | None = None
        started = time.monotonic()
        for attempt in range(3):  # 1 try + 2 retries
            if attempt:
                time.sleep(self.retry_backoff_s * (2 ** (attempt - 1)))
            try:
                with httpx.Client(transport=self._transport, timeout=self.timeout_s) as client:
                    resp = client.post(
                        f"{self.base_url}/chat/completions", json=payload, headers=headers
                    )
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("chat backend transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"chat backend rejected credentials ({resp.status_code})")
            if resp.status_code >= 500:
                last_error = BackendUnavailableError(f"server error {resp.status_code}")
                logger.warning("chat backend 5xx (attempt %d): %s", attempt + 1, resp.status_code)
                continue
            if resp.status_code != 200:
                raise BackendUnavailableError(
                    f"chat backend returned {resp.status_code}: {resp.text[:200]}"
                )
            body = resp.json()
            try:
                choice = body["choices"][0]
                text = choice["message"]["content"] or ""
                truncated = choice.get("finish_reason") == "length"
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailableError(f"malformed completion response: {exc}") from exc
            latency = (time.monotonic() - started) * 1000.0
            return CompletionResult(
                text=text, backend=self.id, latency_ms=latency, truncated=truncated
            )
        raise BackendUnavailableError(f"chat backend unreachable after retries: {last_error}")
