"""Tiered model resolution, chat/stream/structured calls and token accounting."""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import time
from collections import defaultdict
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .graph import Message
from .json_repair import Unrepairable, repair

logger = logging.getLogger(__name__)


class ModelTier(str, enum.Enum):
    REASONING = "reasoning"
    BASIC = "basic"
    VISION = "vision"


TIERS = tuple(t.value for t in ModelTier)


class ModelError(Exception):
    pass


class UnknownKey(ModelError):
    pass


class BackendUnavailable(ModelError):
    """Transport-level failure; callers may retry."""


class BackendRejected(ModelError):
    """The provider refused the request; retrying will not help."""


class FixtureExhausted(ModelError):
    """A scripted backend ran out of responses for an agent."""


class StreamInterrupted(ModelError):
    def __init__(self, message: str, chunks: Sequence[str]):
        super().__init__(message)
        self.chunks = list(chunks)


class StructuredOutputError(ModelError):
    pass


class ParseFailure(StructuredOutputError):
    pass


class SchemaViolation(StructuredOutputError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    tier: ModelTier
    provider: str
    model_name: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.model_name:
            raise ValueError("model_name must be non-empty")
        if "api_key" in self.params:
            raise ValueError("credentials must be referenced by env-var name (api_key_env), not inlined")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    tier: ModelTier

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: TokenUsage


def count_tokens(text: str) -> int:
    """Approximate token count: ceil(UTF-8 bytes / 4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def count_message_tokens(messages: Sequence[Message]) -> int:
    return sum(count_tokens(m.content) for m in messages)


class UsageLedger:
    """Per-run token totals, split by tier."""

    def __init__(self) -> None:
        self.records: list[TokenUsage] = []
        self._totals: dict[str, int] = defaultdict(int)

    def record(self, usage: TokenUsage) -> None:
        self.records.append(usage)
        self._totals[ModelTier(usage.tier).value] += usage.total

    def snapshot(self) -> dict[str, int]:
        return {tier: self._totals.get(tier, 0) for tier in TIERS}

    @property
    def total(self) -> int:
        return sum(self._totals.values())


class Backend(Protocol):
    def complete(self, handle: ModelHandle, messages: Sequence[Message], *, json_mode: bool = False) -> tuple[str, TokenUsage | None]: ...

    def stream(self, handle: ModelHandle, messages: Sequence[Message]) -> Iterator[str]: ...


@dataclass(frozen=True)
class ModelHandle:
    tier: ModelTier
    config: ModelConfig
    backend: Backend
    agent: str | None = None

    @property
    def params(self) -> Mapping[str, Any]:
        return self.config.params

    @property
    def script_key(self) -> str:
        return self.agent or self.tier.value


# ---------------------------------------------------------------------------
# scripted backend


@dataclass(frozen=True)
class ScriptedResponse:
    content: str = ""
    chunk_size: int | None = None
    expect: str | None = None
    error: str | None = None
    message: str = ""
    interrupt_after: int | None = None

    @classmethod
    def parse(cls, entry: str | Mapping[str, Any]) -> ScriptedResponse:
        if isinstance(entry, str):
            return cls(content=entry)
        if not isinstance(entry, Mapping):
            raise ValueError(f"fixture entry must be a string or object, got {type(entry).__name__}")
        unknown = set(entry) - {"content", "chunk_size", "expect", "error", "message", "interrupt_after"}
        if unknown:
            raise ValueError(f"unknown fixture entry keys: {sorted(unknown)}")
        if entry.get("error") not in (None, "unavailable", "rejected"):
            raise ValueError(f"fixture error must be 'unavailable' or 'rejected', got {entry['error']!r}")
        return cls(**{k: entry[k] for k in entry})


class MockBackend:
    """Replays scripted responses keyed by (agent name, per-agent turn index).

    Every request is captured in :attr:`requests` so tests can inspect what
    an agent actually sent.
    """

    def __init__(self, script: Mapping[str, Sequence[str | Mapping[str, Any]]], default_chunk_size: int = 16):
        self.script = {agent: [ScriptedResponse.parse(e) for e in entries] for agent, entries in script.items()}
        self.default_chunk_size = default_chunk_size
        self.turns: dict[str, int] = defaultdict(int)
        self.requests: list[tuple[str, int, list[Message]]] = []

    @classmethod
    def from_file(cls, path: str | Path, **kwargs: Any) -> MockBackend:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, Mapping) and "responses" in data:
            data = data["responses"]
        return cls(data, **kwargs)

    def _next(self, handle: ModelHandle, messages: Sequence[Message]) -> ScriptedResponse:
        key = handle.script_key
        turn = self.turns[key]
        entries = self.script.get(key, [])
        if turn >= len(entries):
            raise FixtureExhausted(f"no scripted response for {key!r} turn {turn}")
        self.turns[key] = turn + 1
        self.requests.append((key, turn, list(messages)))
        resp = entries[turn]
        if resp.error == "unavailable":
            raise BackendUnavailable(resp.message or f"scripted outage for {key!r}")
        if resp.error == "rejected":
            raise BackendRejected(resp.message or f"scripted rejection for {key!r}")
        if resp.expect is not None and not any(resp.expect in m.content for m in messages):
            raise BackendRejected(f"scripted expectation for {key!r} turn {turn} not met: {resp.expect!r} absent from request")
        return resp

    def _chunks(self, resp: ScriptedResponse) -> list[str]:
        size = resp.chunk_size or self.default_chunk_size
        text = resp.content
        return [text[i : i + size] for i in range(0, len(text), size)]

    def complete(self, handle: ModelHandle, messages: Sequence[Message], *, json_mode: bool = False) -> tuple[str, TokenUsage | None]:
        resp = self._next(handle, messages)
        if resp.interrupt_after is not None:
            raise BackendUnavailable(f"scripted interruption for {handle.script_key!r}")
        return resp.content, None

    def stream(self, handle: ModelHandle, messages: Sequence[Message]) -> Iterator[str]:
        resp = self._next(handle, messages)
        chunks = self._chunks(resp)
        if resp.interrupt_after is not None:
            sent = chunks[: resp.interrupt_after]
            yield from sent
            raise StreamInterrupted(f"scripted stream cut after {len(sent)} chunks", sent)
        yield from chunks


# ---------------------------------------------------------------------------
# HTTP chat-completions backend


def _wire_message(m: Message) -> dict[str, Any]:
    out: dict[str, Any] = {"role": m.role, "content": m.content}
    if m.name:
        out["name"] = m.name
    return out


def flatten_for_completion(messages: Sequence[Message]) -> str:
    """Render a chat transcript as one role-prefixed text block for completion models."""
    lines = []
    for m in messages:
        label = m.role if not m.name else f"{m.role} ({m.name})"
        lines.append(f"{label}: {m.content}")
    lines.append("assistant:")
    return "\n\n".join(lines)


class HttpBackend:
    """Chat-completions style JSON over HTTP.

    Reads ``base_url``, ``api_key_env``, ``temperature``, ``max_tokens``,
    ``timeout_s`` and ``mode`` (``chat`` or ``completion``) from the handle's
    params. Transport errors and the statuses in RETRYABLE are retried ``retries`` times.
    """

    RETRYABLE = {408, 429, 500, 502, 503, 504}

    def __init__(self, client: httpx.Client | None = None, *, retries: int = 2, backoff_s: float = 0.5, env: Mapping[str, str] | None = None):
        self.client = client or httpx.Client()
        self.retries = retries
        self.backoff_s = backoff_s
        self.env = os.environ if env is None else env

    def _request(self, handle: ModelHandle, messages: Sequence[Message], *, stream: bool, json_mode: bool) -> tuple[str, dict[str, Any], dict[str, str]]:
        params = handle.params
        base = str(params.get("base_url", "https://api.openai.com/v1")).rstrip("/")
        headers = {"Content-Type": "application/json"}
        key_env = params.get("api_key_env")
        if key_env:
            secret = self.env.get(str(key_env))
            if secret:
                headers["Authorization"] = f"Bearer {secret}"
        body: dict[str, Any] = {"model": handle.config.model_name}
        if params.get("mode", "chat") == "completion":
            url = f"{base}/completions"
            body["prompt"] = flatten_for_completion(messages)
        else:
            url = f"{base}/chat/completions"
            body["messages"] = [_wire_message(m) for m in messages]
        for key in ("temperature", "max_tokens", "top_p"):
            if key in params:
                body[key] = params[key]
        if json_mode:
            body["response_format"] = {"type": "json_object"}
        if stream:
            body["stream"] = True
        return url, body, headers

    def _send(self, url: str, body: dict[str, Any], headers: dict[str, str], timeout: float, stream: bool) -> httpx.Response:
        attempt = 0
        while True:
            try:
                req = self.client.build_request("POST", url, json=body, headers=headers, timeout=timeout)
                resp = self.client.send(req, stream=stream)
            except httpx.TransportError as exc:
                err: ModelError = BackendUnavailable(f"transport failure calling {url}: {exc}")
            else:
                if resp.status_code < 400:
                    return resp
                if stream:
                    resp.read()
                detail = _provider_message(resp)
                if resp.status_code not in self.RETRYABLE:
                    raise BackendRejected(f"HTTP {resp.status_code}: {detail}")
                err = BackendUnavailable(f"HTTP {resp.status_code}: {detail}")
            if attempt >= self.retries:
                raise err
            attempt += 1
            logger.warning("retrying model call (%d/%d): %s", attempt, self.retries, err)
            time.sleep(self.backoff_s * 2 ** (attempt - 1))

    def complete(self, handle: ModelHandle, messages: Sequence[Message], *, json_mode: bool = False) -> tuple[str, TokenUsage | None]:
        url, body, headers = self._request(handle, messages, stream=False, json_mode=json_mode)
        resp = self._send(url, body, headers, float(handle.params.get("timeout_s", 60)), stream=False)
        try:
            data = resp.json()
            choice = data["choices"][0]
            content = choice["message"]["content"] if "message" in choice else choice["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendRejected(f"malformed provider response: {exc}") from exc
        usage = None
        raw = data.get("usage") or {}
        if "prompt_tokens" in raw and "completion_tokens" in raw:
            usage = TokenUsage(int(raw["prompt_tokens"]), int(raw["completion_tokens"]), handle.tier)
        return content or "", usage

    def stream(self, handle: ModelHandle, messages: Sequence[Message]) -> Iterator[str]:
        url, body, headers = self._request(handle, messages, stream=True, json_mode=False)
        resp = self._send(url, body, headers, float(handle.params.get("timeout_s", 60)), stream=True)
        received: list[str] = []
        try:
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                payload = line[5:].strip()
                if payload == "[DONE]":
                    break
                try:
                    choice = json.loads(payload)["choices"][0]
                except (ValueError, KeyError, IndexError):
                    continue
                piece = (choice.get("delta") or {}).get("content") or choice.get("text") or ""
                if piece:
                    received.append(piece)
                    yield piece
        except httpx.TransportError as exc:
            raise StreamInterrupted(f"stream from {url} broke: {exc}", received) from exc
        finally:
            resp.close()


def _provider_message(resp: httpx.Response) -> str:
    try:
        data = resp.json()
    except ValueError:
        return resp.text[:500]
    err = data.get("error") if isinstance(data, dict) else None
    if isinstance(err, dict):
        return str(err.get("message", err))
    return str(err or data)[:500]


class UnconfiguredBackend:
    def __init__(self, reason: str):
        self.reason = reason

    def complete(self, handle: ModelHandle, messages: Sequence[Message], *, json_mode: bool = False) -> tuple[str, TokenUsage | None]:
        raise BackendRejected(self.reason)

    def stream(self, handle: ModelHandle, messages: Sequence[Message]) -> Iterator[str]:
        raise BackendRejected(self.reason)


# ---------------------------------------------------------------------------
# resolution


DEFAULT_AGENT_LLM_MAP: dict[str, ModelTier] = {
    "coordinator": ModelTier.BASIC,
    "planner": ModelTier.BASIC,
    "supervisor": ModelTier.BASIC,
    "researcher": ModelTier.BASIC,
    "coder": ModelTier.BASIC,
    "browser": ModelTier.BASIC,
    "reporter": ModelTier.BASIC,
}


class ModelLayer:
    """Maps tiers and agent names to backends.

    When ``mock`` is given every tier is served by it, regardless of the
    configured providers.
    """

    def __init__(
        self,
        configs: Mapping[ModelTier | str, ModelConfig],
        agent_map: Mapping[str, ModelTier | str] | None = None,
        *,
        mock: MockBackend | None = None,
        http: HttpBackend | None = None,
    ):
        self.configs = {ModelTier(k): v for k, v in configs.items()}
        self.agent_map = {k: ModelTier(v) for k, v in (agent_map or DEFAULT_AGENT_LLM_MAP).items()}
        self.mock = mock
        self._http = http

    def _backend(self, config: ModelConfig) -> Backend:
        if self.mock is not None:
            return self.mock
        if config.provider in ("none", ""):
            return UnconfiguredBackend(f"{config.tier.value} backend not configured")
        if config.provider == "mock":
            raise BackendRejected("provider 'mock' requires a scripted fixture")
        if self._http is None:
            self._http = HttpBackend()
        return self._http

    def resolve_model(self, key: ModelTier | str, overrides: Mapping[str, Any] | None = None, *, agent: str | None = None) -> ModelHandle:
        overrides = dict(overrides or {})
        try:
            tier = ModelTier(key)
        except ValueError:
            if key not in self.agent_map:
                raise UnknownKey(f"{key!r} is neither a model tier nor a mapped agent") from None
            return self.resolve_model(self.agent_map[key], overrides, agent=agent or str(key))
        base = self.configs.get(tier)
        if base is None:
            raise UnknownKey(f"no model configured for tier {tier.value!r}")
        config = ModelConfig(tier, base.provider, base.model_name, {**base.params, **overrides})
        return ModelHandle(tier=tier, config=config, backend=self._backend(config), agent=agent)


def _check_messages(messages: Sequence[Message]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")


def _usage(handle: ModelHandle, messages: Sequence[Message], content: str, reported: TokenUsage | None) -> TokenUsage:
    if reported is not None:
        return TokenUsage(reported.prompt_tokens, reported.completion_tokens, handle.tier)
    return TokenUsage(count_message_tokens(messages), count_tokens(content), handle.tier)


def chat(handle: ModelHandle, messages: Sequence[Message], *, ledger: UsageLedger | None = None, json_mode: bool = False) -> ChatResponse:
    _check_messages(messages)
    content, reported = handle.backend.complete(handle, messages, json_mode=json_mode)
    usage = _usage(handle, messages, content, reported)
    if ledger is not None:
        ledger.record(usage)
    return ChatResponse(content, usage)


def chat_stream(handle: ModelHandle, messages: Sequence[Message], *, ledger: UsageLedger | None = None) -> Iterator[str]:
    """Yield content chunks; usage is recorded once the stream is exhausted."""
    _check_messages(messages)
    received: list[str] = []
    try:
        for chunk in handle.backend.stream(handle, messages):
            received.append(chunk)
            yield chunk
    except StreamInterrupted as exc:
        if ledger is not None:
            ledger.record(_usage(handle, messages, "".join(exc.chunks), None))
        raise
    if ledger is not None:
        ledger.record(_usage(handle, messages, "".join(received), None))


@dataclass(frozen=True)
class Schema:
    """Required fields of a structured reply, each with an optional enum of allowed values."""

    name: str
    fields: Mapping[str, Sequence[str] | None]
    build: Callable[..., Any] = dict

    def validate(self, data: Any) -> Any:
        if not isinstance(data, dict):
            raise SchemaViolation(f"{self.name}: expected a JSON object, got {type(data).__name__}")
        for fname, allowed in self.fields.items():
            if fname not in data:
                raise SchemaViolation(f"{self.name}: required field {fname!r} missing")
            if allowed is not None and data[fname] not in allowed:
                raise SchemaViolation(f"{self.name}: {fname}={data[fname]!r} not in {list(allowed)}")
        return self.build(**{k: data[k] for k in self.fields})


def structured_chat(handle: ModelHandle, messages: Sequence[Message], schema: Schema, *, ledger: UsageLedger | None = None) -> Any:
    response = chat(handle, messages, ledger=ledger, json_mode=True)
    try:
        data = repair(response.content).value
    except Unrepairable as exc:
        raise ParseFailure(f"{schema.name}: unparseable reply {response.content[:80]!r}") from exc
    return schema.validate(data)
