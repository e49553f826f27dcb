"""Browser control through a line-oriented JSON driver protocol.

Each command is one JSON object per line on the driver's stdin::

    {"action": "navigate", "url": "https://..."}
    {"action": "extract", "selector": "body"}
    {"action": "click", "selector": "Next page"}
    {"action": "type", "selector": "#q", "text": "query"}
    {"action": "close"}

and each reply is one JSON object per line on its stdout: ``{"ok": bool, "content": str}``.

Run ``python -m tierflow.tools.browser PAGES.json`` to serve the mock
driver over stdio.
"""

from __future__ import annotations

import json
import select
import subprocess
import sys
from collections.abc import Mapping, Sequence
from html.parser import HTMLParser
from typing import IO, Any, Protocol
from urllib.parse import urljoin

from .base import ErrorKind, Tool, ToolError, ToolSpec
from .web import Fetcher, html_to_text

ACTIONS = ("navigate", "extract", "click", "type", "close")


class BrowserDriver(Protocol):
    def send(self, command: Mapping[str, Any]) -> dict[str, Any]: ...


class _Links(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.links: list[tuple[str, str]] = []
        self._href: str | None = None
        self._text: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            self._href = dict(attrs).get("href")
            self._text = []

    def handle_data(self, data):
        if self._href is not None:
            self._text.append(data)

    def handle_endtag(self, tag):
        if tag == "a" and self._href is not None:
            self.links.append(("".join(self._text).strip(), self._href))
            self._href = None


class MockBrowserDriver:
    """In-memory site: navigate to known URLs, follow links by text or href, fill fields."""

    def __init__(self, pages: Mapping[str, str]):
        self.pages = dict(pages)
        self.url: str | None = None
        self.fields: dict[str, str] = {}

    def send(self, command: Mapping[str, Any]) -> dict[str, Any]:
        action = command.get("action")
        if action == "navigate":
            return self._goto(str(command.get("url", "")))
        if action == "close":
            self.url = None
            return {"ok": True, "content": "closed"}
        if self.url is None:
            return {"ok": False, "content": "no page loaded"}
        if action == "extract":
            return {"ok": True, "content": html_to_text(self.pages[self.url])}
        if action == "click":
            selector = str(command.get("selector", ""))
            parser = _Links()
            parser.feed(self.pages[self.url])
            for text, href in parser.links:
                if selector in (text, href):
                    return self._goto(urljoin(self.url, href))
            return {"ok": False, "content": f"no link matching {selector!r}"}
        if action == "type":
            self.fields[str(command.get("selector", ""))] = str(command.get("text", ""))
            return {"ok": True, "content": f"typed into {command.get('selector')}"}
        return {"ok": False, "content": f"unknown action {action!r}"}

    def _goto(self, url: str) -> dict[str, Any]:
        if url not in self.pages:
            return {"ok": False, "content": f"cannot load {url}"}
        self.url = url
        self.fields.clear()
        return {"ok": True, "content": f"loaded {url}"}


class FetchBrowserDriver:
    """Default driver: plain HTTP fetches, no scripting or form interaction."""

    def __init__(self, fetcher: Fetcher | None = None):
        self.fetcher = fetcher or Fetcher()
        self.text: str | None = None

    def send(self, command: Mapping[str, Any]) -> dict[str, Any]:
        action = command.get("action")
        if action == "navigate":
            try:
                self.text = self.fetcher.fetch_url(str(command.get("url", "")))
            except ToolError as exc:
                return {"ok": False, "content": exc.content}
            return {"ok": True, "content": f"loaded {command.get('url')}"}
        if action == "extract":
            if self.text is None:
                return {"ok": False, "content": "no page loaded"}
            return {"ok": True, "content": self.text}
        if action == "close":
            self.text = None
            return {"ok": True, "content": "closed"}
        return {"ok": False, "content": f"action {action!r} needs an interactive browser driver"}


class SubprocessBrowserDriver:
    """Speaks the protocol with an external driver process over its stdio."""

    def __init__(self, argv: Sequence[str], *, timeout_s: float = 30.0):
        self.timeout_s = timeout_s
        self.proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL)

    def send(self, command: Mapping[str, Any]) -> dict[str, Any]:
        assert self.proc.stdin is not None and self.proc.stdout is not None
        try:
            self.proc.stdin.write((json.dumps(dict(command), ensure_ascii=False) + "\n").encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"browser driver is gone: {exc}") from exc
        ready, _, _ = select.select([self.proc.stdout], [], [], self.timeout_s)
        if not ready:
            raise ToolError(ErrorKind.TIMEOUT, f"browser driver gave no reply within {self.timeout_s}s")
        line = self.proc.stdout.readline()
        if not line:
            raise ToolError(ErrorKind.TRANSPORT, "browser driver closed its output")
        try:
            reply = json.loads(line)
        except ValueError as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"browser driver sent invalid JSON: {line[:80]!r}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ToolError(ErrorKind.TRANSPORT, "browser driver reply lacks 'ok'")
        return {"ok": bool(reply["ok"]), "content": str(reply.get("content", ""))}

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.send({"action": "close"})
            except ToolError:
                pass
            self.proc.terminate()
            self.proc.wait(timeout=5)


def serve(driver: BrowserDriver, stdin: IO[str], stdout: IO[str]) -> None:
    """Answer protocol lines from ``stdin`` until EOF or a close command."""
    for line in stdin:
        if not line.strip():
            continue
        command = None
        try:
            command = json.loads(line)
            reply = driver.send(command) if isinstance(command, dict) else {"ok": False, "content": "command must be an object"}
        except ValueError:
            reply = {"ok": False, "content": "invalid JSON command"}
        stdout.write(json.dumps(reply, ensure_ascii=False) + "\n")
        stdout.flush()
        if isinstance(command, dict) and command.get("action") == "close":
            return


BROWSER_SPEC = ToolSpec(
    name="browser",
    description="Drive a web browser: navigate to a URL, extract page text, click a link, or type into a field.",
    param_schema={
        "type": "object",
        "properties": {
            "action": {"enum": list(ACTIONS)},
            "url": {"type": "string"},
            "selector": {"type": "string"},
            "text": {"type": "string"},
        },
        "required": ["action"],
        "additionalProperties": False,
    },
)


def browser_tool(driver: BrowserDriver) -> Tool:
    def browser(action: str, **fields: str) -> str:
        reply = driver.send({"action": action, **fields})
        if not reply.get("ok"):
            raise ToolError(ErrorKind.TRANSPORT, str(reply.get("content", "browser action failed")))
        return str(reply.get("content", ""))

    return Tool(BROWSER_SPEC, browser)


def main(argv: Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    pages: dict[str, str] = {}
    if args:
        with open(args[0], encoding="utf-8") as fh:
            pages = json.load(fh)
    serve(MockBrowserDriver(pages), sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
