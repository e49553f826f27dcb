"""Tolerant repair of almost-JSON text emitted by language models.

The repair pipeline runs in a fixed order:

1. strip a markdown code fence and any prose around the first top-level
   ``{``/``[`` value;
2. tokenize tolerantly (single-quoted strings, bare identifier keys);
3. drop trailing commas;
4. close a string left open at end of input, then close open containers
   innermost first;
5. re-serialize and strict-parse the result.

Input that already strict-parses is returned as-is with no fixes recorded.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from typing import Any

__all__ = [
    "FixKind",
    "RepairOutcome",
    "Unrepairable",
    "repair",
    "loads",
    "strict_loads",
    "to_canonical_text",
]

MAX_DEPTH = 256
MAX_CANDIDATES = 32


class FixKind(str, enum.Enum):
    # Declaration order is pipeline order; applied_fixes is sorted by it.
    FENCE_STRIPPED = "fence_stripped"
    PROSE_STRIPPED = "prose_stripped"
    SINGLE_QUOTES = "single_quotes"
    UNQUOTED_KEY = "unquoted_key"
    TRAILING_COMMA = "trailing_comma"
    TRUNCATED_STRING = "truncated_string"
    UNCLOSED_CONTAINER = "unclosed_container"


_ORDER = {kind: idx for idx, kind in enumerate(FixKind)}


class Unrepairable(ValueError):
    """No plausible JSON value could be recovered from the text."""


@dataclass(frozen=True)
class RepairOutcome:
    value: Any
    applied_fixes: tuple[FixKind, ...] = ()

    @property
    def text(self) -> str:
        return to_canonical_text(self.value)


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-standard JSON constant {name!r}")


def _finite_float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"number out of range: {raw}")
    return value


def strict_loads(text: str) -> Any:
    """Parse ``text`` as RFC 8259 JSON.

    Unlike :func:`json.loads` this rejects ``NaN``/``Infinity`` and numbers
    that overflow to infinity. Every failure surfaces as ``ValueError``.
    """
    try:
        return json.loads(text, parse_constant=_reject_constant, parse_float=_finite_float)
    except RecursionError as exc:
        raise ValueError("JSON nesting too deep") from exc


def to_canonical_text(value: Any) -> str:
    """Compact, insertion-ordered serialization with raw UTF-8 (no ``\\uXXXX`` for non-ASCII)."""
    return json.dumps(value, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


class _ParseError(Exception):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at offset {pos}")
        self.pos = pos


_MISSING = object()
_WS = " \t\n\r"
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$\-]*")
_NUMBER = re.compile(r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_NUMBER_TAIL = re.compile(r"[0-9.eE+\-]*")
_HEX4 = re.compile(r"[0-9a-fA-F]{4}")
_ESCAPES = {'"': '"', "\\": "\\", "/": "/", "b": "\b", "f": "\f", "n": "\n", "r": "\r", "t": "\t", "'": "'"}
_LITERALS = {"true": True, "false": False, "null": None}


class _Parser:
    """Recursive-descent parser that tolerates the repairable defects."""

    def __init__(self, text: str, pos: int):
        self.s = text
        self.i = pos
        self.n = len(text)
        self.fixes: set[FixKind] = set()

    def _fail(self, message: str) -> None:
        raise _ParseError(message, self.i)

    def _ws(self) -> None:
        s, n = self.s, self.n
        while self.i < n and s[self.i] in _WS:
            self.i += 1

    def _eof(self) -> bool:
        return self.i >= self.n

    def value(self, depth: int) -> Any:
        if depth > MAX_DEPTH:
            self._fail("nesting too deep")
        self._ws()
        if self._eof():
            return _MISSING
        c = self.s[self.i]
        if c == "{":
            return self._object(depth)
        if c == "[":
            return self._array(depth)
        if c in "\"'":
            return self._string()
        if c == "-" or c.isdigit():
            return self._number()
        return self._literal()

    def _object(self, depth: int) -> dict:
        self.i += 1
        out: dict[str, Any] = {}
        while True:
            self._ws()
            if self._eof():
                self.fixes.add(FixKind.UNCLOSED_CONTAINER)
                return out
            c = self.s[self.i]
            if c == "}":
                self.i += 1
                return out
            if c in "\"'":
                key = self._string()
            else:
                m = _IDENT.match(self.s, self.i)
                if not m:
                    self._fail("expected object key")
                key = m.group(0)
                self.i = m.end()
                self.fixes.add(FixKind.UNQUOTED_KEY)
            self._ws()
            if self._eof():
                # dangling key with no value is dropped
                self.fixes.add(FixKind.UNCLOSED_CONTAINER)
                return out
            if self.s[self.i] != ":":
                self._fail("expected ':'")
            self.i += 1
            item = self.value(depth + 1)
            if item is _MISSING:
                self.fixes.add(FixKind.UNCLOSED_CONTAINER)
                return out
            out[key] = item
            if self._after_item("}"):
                return out

    def _array(self, depth: int) -> list:
        self.i += 1
        out: list[Any] = []
        self._ws()
        if not self._eof() and self.s[self.i] == "]":
            self.i += 1
            return out
        while True:
            item = self.value(depth + 1)
            if item is _MISSING:
                self.fixes.add(FixKind.UNCLOSED_CONTAINER)
                return out
            out.append(item)
            if self._after_item("]"):
                return out

    def _after_item(self, close: str) -> bool:
        """Consume the separator after a container member; True when the container ended."""
        self._ws()
        if self._eof():
            self.fixes.add(FixKind.UNCLOSED_CONTAINER)
            return True
        c = self.s[self.i]
        if c == close:
            self.i += 1
            return True
        if c != ",":
            self._fail(f"expected ',' or {close!r}")
        self.i += 1
        self._ws()
        if self._eof():
            self.fixes.add(FixKind.TRAILING_COMMA)
            self.fixes.add(FixKind.UNCLOSED_CONTAINER)
            return True
        if self.s[self.i] == close:
            self.fixes.add(FixKind.TRAILING_COMMA)
            self.i += 1
            return True
        return False

    def _string(self) -> str:
        s, n = self.s, self.n
        quote = s[self.i]
        if quote == "'":
            self.fixes.add(FixKind.SINGLE_QUOTES)
        self.i += 1
        buf: list[str] = []
        while self.i < n:
            c = s[self.i]
            if c == quote:
                self.i += 1
                return "".join(buf)
            if c != "\\":
                buf.append(c)
                self.i += 1
                continue
            if self.i + 1 >= n:
                self.i = n  # dangling backslash at end of input
                break
            esc = s[self.i + 1]
            if esc == "u":
                digits = s[self.i + 2 : self.i + 6]
                if _HEX4.fullmatch(digits):
                    buf.append(self._unicode_escape(int(digits, 16)))
                    continue
                if self.i + 2 + len(digits) == n and all(ch in "0123456789abcdefABCDEF" for ch in digits):
                    self.i = n  # escape cut off by truncation
                    break
                self._fail("invalid \\u escape")
            buf.append(_ESCAPES.get(esc, esc))
            self.i += 2
        self.fixes.add(FixKind.TRUNCATED_STRING)
        return "".join(buf)

    def _unicode_escape(self, code: int) -> str:
        self.i += 6
        if 0xD800 <= code <= 0xDBFF and self.s.startswith("\\u", self.i):
            low = self.s[self.i + 2 : self.i + 6]
            if _HEX4.fullmatch(low) and 0xDC00 <= int(low, 16) <= 0xDFFF:
                self.i += 6
                return chr(0x10000 + ((code - 0xD800) << 10) + (int(low, 16) - 0xDC00))
        return chr(code)

    def _number(self) -> Any:
        m = _NUMBER.match(self.s, self.i)
        if not m:
            tail = _NUMBER_TAIL.match(self.s, self.i)
            if tail.end() == self.n:
                self.i = self.n  # e.g. a lone '-' cut off by truncation
                return _MISSING
            self._fail("invalid number")
        raw = m.group(0)
        end = m.end()
        tail = _NUMBER_TAIL.match(self.s, end)
        if tail.end() == self.n and tail.end() > end:
            end = self.n  # '1.' or '2e' at end of input keeps the valid prefix
        self.i = end
        if raw.lstrip("-").isdigit():
            return int(raw)
        try:
            return _finite_float(raw)
        except ValueError:
            self._fail("number out of range")

    def _literal(self) -> Any:
        s = self.s
        for word, val in _LITERALS.items():
            if s.startswith(word, self.i):
                end = self.i + len(word)
                if end < self.n and (s[end].isalnum() or s[end] == "_"):
                    self._fail("unexpected identifier")
                self.i = end
                return val
            rest = s[self.i :]
            if rest and word.startswith(rest):
                self.i = self.n
                return _MISSING
        self._fail("unexpected character")


_FENCE_OPEN = re.compile(r"```[ \t]*[A-Za-z0-9_+\-]*[ \t]*\r?\n?")


def _top_level_openers(text: str) -> list[int]:
    """Offsets of '{'/'[' that start at bracket depth zero.

    Quote characters only delimit strings inside a bracketed region; at depth
    zero they are prose (apostrophes).
    """
    found: list[int] = []
    depth = 0
    quote = ""
    i, n = 0, len(text)
    while i < n and len(found) < MAX_CANDIDATES:
        c = text[i]
        if quote:
            if c == "\\":
                i += 2
                continue
            if c == quote:
                quote = ""
        elif c in "{[":
            if depth == 0:
                found.append(i)
            depth += 1
        elif c in "}]":
            depth = max(depth - 1, 0)
        elif c in "\"'" and depth > 0:
            quote = c
        i += 1
    return found


def _first_opener(text: str) -> int | None:
    hits = [p for p in (text.find("{"), text.find("[")) if p >= 0]
    return min(hits) if hits else None


def _sorted(fixes: set[FixKind]) -> tuple[FixKind, ...]:
    return tuple(sorted(fixes, key=_ORDER.__getitem__))


def repair(text: str) -> RepairOutcome:
    """Recover a JSON value from ``text`` or raise :class:`Unrepairable`."""
    if not isinstance(text, str):
        raise TypeError(f"repair() expects str, got {type(text).__name__}")
    try:
        return RepairOutcome(strict_loads(text))
    except ValueError:
        pass

    fixes: set[FixKind] = set()
    body = text
    fence = _FENCE_OPEN.search(text)
    opener = _first_opener(text)
    if fence and (opener is None or fence.start() < opener):
        fixes.add(FixKind.FENCE_STRIPPED)
        close = text.find("```", fence.end())
        body = text[fence.end() :] if close < 0 else text[fence.end() : close]
        outside = text[: fence.start()] + ("" if close < 0 else text[close + 3 :])
        if outside.strip():
            fixes.add(FixKind.PROSE_STRIPPED)
        try:
            return RepairOutcome(strict_loads(body), _sorted(fixes))
        except ValueError:
            pass

    for start in _top_level_openers(body):
        parser = _Parser(body, start)
        try:
            value = parser.value(0)
        except _ParseError:
            continue
        found = fixes | parser.fixes
        if body[:start].strip() or body[parser.i :].strip():
            found.add(FixKind.PROSE_STRIPPED)
        # final strict pass; the parser cannot emit anything that fails it
        value = strict_loads(to_canonical_text(value))
        return RepairOutcome(value, _sorted(found))

    raise Unrepairable(f"no JSON value recoverable from {text[:60]!r}")


def loads(text: str) -> Any:
    """Shorthand for ``repair(text).value``."""
    return repair(text).value
