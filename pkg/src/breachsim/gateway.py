"""Chat-completion client with deterministic record/replay cassettes.

This is the only module that touches the network. Orchestration talks to a
``Transport``; in tests that is a cassette (replay, fully offline) or a plain
callable. The live transport speaks the common OpenAI-style
``/chat/completions`` wire shape so any compatible endpoint works; the API key
comes from an environment variable only and never appears in config or logs.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx


class GatewayError(Exception):
    """Transport failure, missing credential, or cassette mismatch."""


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str
    name: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict = {"role": self.role, "content": self.content}
        if self.name:
            out["name"] = self.name
        return out


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.messages or self.messages[0].role != "system":
            raise ValueError("first message must be the system message")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [m.to_dict() for m in self.messages],
        }


def request_fingerprint(request: ChatRequest) -> str:
    canonical = json.dumps(request.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


class Transport(Protocol):
    def send(self, request: ChatRequest) -> str: ...


@dataclass
class GatewayConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    temperature: float = 1.0
    retry_limit: int = 3
    retry_backoff_seconds: float = 0.5
    min_request_interval_seconds: float = 0.0
    api_key_env: str = "BREACHSIM_API_KEY"
    keep_last_messages: int = 30  # context trimming: system + most recent N

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        raw = json.loads(Path(path).read_text())
        return cls(**raw)


class LiveTransport:
    """HTTP transport with bounded retries, backoff, and a request-rate floor."""

    def __init__(self, config: GatewayConfig, client: Optional[httpx.Client] = None) -> None:
        self.config = config
        self._client = client or httpx.Client(base_url=config.base_url, timeout=60.0)
        self._last_request_at = 0.0

    def send(self, request: ChatRequest) -> str:
        api_key = os.environ.get(self.config.api_key_env)
        if not api_key:
            raise GatewayError(
                f"credential missing: set the {self.config.api_key_env} environment variable"
            )
        headers = {"Authorization": f"Bearer {api_key}"}
        last_error: Optional[Exception] = None
        for attempt in range(self.config.retry_limit + 1):
            wait = self.config.min_request_interval_seconds - (time.monotonic() - self._last_request_at)
            if wait > 0:
                time.sleep(wait)
            self._last_request_at = time.monotonic()
            try:
                response = self._client.post(
                    "/chat/completions", json=request.to_dict(), headers=headers
                )
                if response.status_code in (429, 500, 502, 503, 504):
                    raise GatewayError(f"transient HTTP {response.status_code}")
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (httpx.TransportError, GatewayError) as exc:
                last_error = exc
                if attempt < self.config.retry_limit:
                    time.sleep(self.config.retry_backoff_seconds * (2**attempt))
        raise GatewayError(f"retry budget exhausted: {last_error}")


class FunctionTransport:
    """Wraps a plain callable; handy for stub agents in tests and demos."""

    def __init__(self, fn: Callable[[ChatRequest], str]) -> None:
        self._fn = fn

    def send(self, request: ChatRequest) -> str:
        return self._fn(request)


class CassetteMode(Enum):
    RECORD = "record"
    REPLAY = "replay"
    PASSTHROUGH = "passthrough"


@dataclass
class Cassette:
    """Ordered (fingerprint, response) exchanges; one file per recorded session."""

    entries: list[dict] = field(default_factory=list)
    mode: CassetteMode = CassetteMode.REPLAY
    _cursor: int = 0

    @classmethod
    def load(cls, path: str | Path, mode: CassetteMode = CassetteMode.REPLAY) -> "Cassette":
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict) or "entries" not in raw:
            raise GatewayError(f"{path}: not a cassette file")
        return cls(entries=raw["entries"], mode=mode)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"version": "1", "entries": self.entries}, indent=2, sort_keys=True) + "\n"
        )

    def record(self, request: ChatRequest, response: str) -> None:
        self.entries.append(
            {
                "fingerprint": request_fingerprint(request),
                "request": request.to_dict(),
                "response": response,
            }
        )

    def replay(self, request: ChatRequest) -> str:
        if self._cursor >= len(self.entries):
            raise GatewayError("cassette exhausted: more requests than recorded exchanges")
        entry = self.entries[self._cursor]
        fingerprint = request_fingerprint(request)
        if entry["fingerprint"] != fingerprint:
            field_name = _first_diverging_field(entry.get("request"), request.to_dict())
            raise GatewayError(
                f"cassette fingerprint mismatch at exchange {self._cursor}: "
                f"request differs in field {field_name!r}"
            )
        self._cursor += 1
        return entry["response"]


def _first_diverging_field(recorded: Optional[dict], actual: dict) -> str:
    if not recorded:
        return "<request not stored>"
    for key in ("model", "temperature", "messages"):
        if recorded.get(key) != actual.get(key):
            if key != "messages":
                return key
            rec_msgs, act_msgs = recorded.get("messages", []), actual.get("messages", [])
            for i, (r, a) in enumerate(zip(rec_msgs, act_msgs)):
                for sub in ("role", "name", "content"):
                    if r.get(sub) != a.get(sub):
                        return f"messages[{i}].{sub}"
            return "messages (length)"
    return "<unknown>"


class CassetteTransport:
    """Replay from, or record through to, a cassette."""

    def __init__(self, cassette: Cassette, inner: Optional[Transport] = None) -> None:
        if cassette.mode is CassetteMode.RECORD and inner is None:
            raise GatewayError("record mode requires an inner transport")
        self.cassette = cassette
        self._inner = inner

    def send(self, request: ChatRequest) -> str:
        if self.cassette.mode is CassetteMode.REPLAY:
            return self.cassette.replay(request)
        assert self._inner is not None
        response = self._inner.send(request)
        if self.cassette.mode is CassetteMode.RECORD:
            self.cassette.record(request, response)
        return response


def trim_messages(messages: Sequence[ChatMessage], keep_last: int) -> tuple[ChatMessage, ...]:
    """Keep the system message plus the most recent ``keep_last`` messages."""
    if len(messages) <= keep_last + 1:
        return tuple(messages)
    return (messages[0], *messages[-keep_last:])


def complete(request: ChatRequest, transport: Transport, keep_last: int = 30) -> str:
    """Send one chat request and return the assistant message text."""
    trimmed = trim_messages(request.messages, keep_last)
    if len(trimmed) != len(request.messages):
        request = ChatRequest(
            model=request.model, messages=trimmed, temperature=request.temperature
        )
    return transport.send(request)
