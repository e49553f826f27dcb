"""Uniform tool interface: schema-checked dispatch with one I/O log record per call."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import time
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any

import jsonschema

logger = logging.getLogger(__name__)

REDACTED = "***"
_SECRET_KEY = re.compile(r"(api[_-]?key|token|secret|password|authorization)", re.I)


class ErrorKind(str, enum.Enum):
    TIMEOUT = "timeout"
    TRANSPORT = "transport"
    DENIED = "denied"
    NONZERO_EXIT = "nonzero_exit"
    INVALID_ARGS = "invalid_args"


class ToolError(Exception):
    """Raised inside tool implementations; the registry turns it into a failed ToolResult."""

    def __init__(self, kind: ErrorKind, message: str, content: str | None = None):
        super().__init__(message)
        self.kind = ErrorKind(kind)
        self.content = message if content is None else content


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    param_schema: Mapping[str, Any]

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError(f"tool {self.name!r} needs a description")


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    content: str
    error_kind: ErrorKind | None = None

    def __post_init__(self) -> None:
        if self.ok and self.error_kind is not None:
            raise ValueError("successful results carry no error_kind")

    @classmethod
    def failure(cls, kind: ErrorKind | str, content: str) -> ToolResult:
        return cls(False, content, ErrorKind(kind))

    def as_observation(self) -> str:
        if self.ok:
            return self.content
        return f"[error: {self.error_kind.value}] {self.content}"


@dataclass(frozen=True)
class IoLogRecord:
    tool: str
    arguments: dict[str, Any]
    result_digest: str
    duration_ms: int
    ok: bool = True
    error_kind: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": self.tool,
            "arguments": self.arguments,
            "result_digest": self.result_digest,
            "duration_ms": self.duration_ms,
            "ok": self.ok,
            "error_kind": self.error_kind,
        }


class Redactor:
    """Masks credential values (looked up from env var names) and secret-looking keys."""

    def __init__(self, env_names: Iterable[str] = (), env: Mapping[str, str] | None = None):
        env = os.environ if env is None else env
        self.secrets = sorted({env[n] for n in env_names if env.get(n)}, key=len, reverse=True)

    def _text(self, text: str) -> str:
        for secret in self.secrets:
            text = text.replace(secret, REDACTED)
        return text

    def __call__(self, value: Any, key: str = "") -> Any:
        if key and _SECRET_KEY.search(key):
            return REDACTED
        if isinstance(value, str):
            return self._text(value)
        if isinstance(value, Mapping):
            return {str(k): self(v, str(k)) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self(v) for v in value]
        return value


class ToolLog:
    """Collects IoLogRecords for one run."""

    def __init__(self) -> None:
        self.records: list[IoLogRecord] = []

    def append(self, record: IoLogRecord) -> None:
        self.records.append(record)

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in self.records)

    def __len__(self) -> int:
        return len(self.records)


ToolFn = Callable[..., Any]


@dataclass(frozen=True)
class Tool:
    spec: ToolSpec
    fn: ToolFn


class ToolRegistry:
    """Immutable name -> tool mapping shared by all agents of a run."""

    def __init__(self, tools: Iterable[Tool], *, redactor: Redactor | None = None):
        table: dict[str, Tool] = {}
        for tool in tools:
            if tool.spec.name in table:
                raise ValueError(f"duplicate tool name {tool.spec.name!r}")
            table[tool.spec.name] = tool
        self._tools = MappingProxyType(table)
        self.redactor = redactor or Redactor()

    @property
    def tools(self) -> Mapping[str, Tool]:
        return self._tools

    def specs(self, names: Iterable[str] | None = None) -> list[ToolSpec]:
        wanted = self._tools.keys() if names is None else [n for n in names if n in self._tools]
        return [self._tools[n].spec for n in wanted]

    def __contains__(self, name: object) -> bool:
        return name in self._tools


def _coerce(raw: Any) -> ToolResult:
    if isinstance(raw, ToolResult):
        return raw
    if isinstance(raw, str):
        return ToolResult(True, raw)
    return ToolResult(True, json.dumps(raw, ensure_ascii=False))


def invoke(
    registry: ToolRegistry,
    name: str,
    arguments: Mapping[str, Any] | None,
    *,
    log: ToolLog | None = None,
    allowed: Iterable[str] | None = None,
) -> ToolResult:
    """Validate, dispatch and log one tool call. Never raises."""
    started = time.monotonic()
    args = dict(arguments) if isinstance(arguments, Mapping) else {}
    tool = registry.tools.get(name)
    if tool is None:
        result = ToolResult.failure(ErrorKind.DENIED, f"unknown tool {name!r}")
    elif allowed is not None and name not in set(allowed):
        result = ToolResult.failure(ErrorKind.DENIED, f"tool {name!r} is not available to this agent")
    elif not isinstance(arguments, Mapping):
        result = ToolResult.failure(ErrorKind.INVALID_ARGS, "arguments must be a JSON object")
    else:
        try:
            jsonschema.validate(args, tool.spec.param_schema)
        except jsonschema.ValidationError as exc:
            result = ToolResult.failure(ErrorKind.INVALID_ARGS, f"invalid arguments for {name}: {exc.message}")
        else:
            try:
                result = _coerce(tool.fn(**args))
            except ToolError as exc:
                result = ToolResult.failure(exc.kind, exc.content)
            except Exception as exc:  # tools never raise into the agent loop
                logger.exception("tool %s crashed", name)
                result = ToolResult.failure(ErrorKind.TRANSPORT, f"{type(exc).__name__}: {exc}")
    record = IoLogRecord(
        tool=name,
        arguments=registry.redactor(args),
        result_digest=hashlib.sha256(result.content.encode("utf-8")).hexdigest(),
        duration_ms=max(0, int((time.monotonic() - started) * 1000)),
        ok=result.ok,
        error_kind=result.error_kind.value if result.error_kind else None,
    )
    if log is not None:
        log.append(record)
    logger.info("tool %s ok=%s in %dms args=%s", name, result.ok, record.duration_ms, record.arguments)
    return result
