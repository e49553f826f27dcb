"""URL fetching with HTML-to-text extraction."""

from __future__ import annotations

import re
from html.parser import HTMLParser
from urllib.parse import urlparse

import httpx

from .base import ErrorKind, Tool, ToolError, ToolSpec

DEFAULT_CAP = 64 * 1024
TRUNCATION_MARKER = "\n[... truncated ...]"

_SKIP = {"script", "style", "noscript", "template", "head"}
_BLOCK = {"p", "div", "br", "li", "ul", "ol", "tr", "h1", "h2", "h3", "h4", "h5", "h6", "section", "article", "table", "title"}


class _TextExtractor(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP:
            self._skip += 1
        elif tag in _BLOCK:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _SKIP:
            self._skip = max(0, self._skip - 1)
        elif tag in _BLOCK:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def html_to_text(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    text = "".join(parser.parts)
    lines = (re.sub(r"[ \t\r\f\v]+", " ", line).strip() for line in text.split("\n"))
    return "\n".join(line for line in lines if line)


def cap_text(text: str, cap: int = DEFAULT_CAP) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + TRUNCATION_MARKER


def check_http_url(url: str) -> None:
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ToolError(ErrorKind.DENIED, f"only http(s) URLs may be fetched, got {url!r}")


class Fetcher:
    def __init__(self, client: httpx.Client | None = None, *, cap: int = DEFAULT_CAP, timeout_s: float = 30.0):
        self.client = client or httpx.Client(follow_redirects=True)
        self.cap = cap
        self.timeout_s = timeout_s

    def fetch_url(self, url: str) -> str:
        check_http_url(url)
        try:
            resp = self.client.get(url, timeout=self.timeout_s)
        except httpx.TransportError as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"fetch failed for {url}: {exc}") from exc
        if resp.status_code >= 400:
            raise ToolError(ErrorKind.TRANSPORT, f"fetch of {url} returned HTTP {resp.status_code}")
        ctype = resp.headers.get("content-type", "")
        body = resp.text
        if "html" in ctype or (not ctype and body.lstrip().startswith("<")):
            body = html_to_text(body)
        return cap_text(body, self.cap)


FETCH_SPEC = ToolSpec(
    name="fetch_url",
    description="Download an http(s) URL and return its readable text content.",
    param_schema={
        "type": "object",
        "properties": {"url": {"type": "string", "minLength": 1}},
        "required": ["url"],
        "additionalProperties": False,
    },
)


def fetch_tool(fetcher: Fetcher) -> Tool:
    return Tool(FETCH_SPEC, fetcher.fetch_url)


def canned_pages_transport(pages: dict[str, str]) -> httpx.MockTransport:
    """Serves ``pages[url]`` as text/html; unknown URLs get a 404."""

    def handler(request: httpx.Request) -> httpx.Response:
        body = pages.get(str(request.url))
        if body is None:
            return httpx.Response(404, text="not found")
        return httpx.Response(200, text=body, headers={"content-type": "text/html; charset=utf-8"})

    return httpx.MockTransport(handler)
