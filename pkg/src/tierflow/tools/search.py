"""Web search over a Tavily-shaped JSON endpoint."""

from __future__ import annotations

import json
import logging
import os
import time
from collections.abc import Mapping, Sequence
from typing import Any

import httpx

from .base import ErrorKind, Tool, ToolError, ToolSpec

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.tavily.com/search"
API_KEY_ENV = "TAVILY_API_KEY"
DEFAULT_MAX_RESULTS = 5

SEARCH_SPEC = ToolSpec(
    name="tavily_search",
    description="Search the web and return a JSON list of {title, url, content} results.",
    param_schema={
        "type": "object",
        "properties": {
            "query": {"type": "string", "minLength": 1},
            "max_results": {"type": "integer", "minimum": 1},
        },
        "required": ["query"],
        "additionalProperties": False,
    },
)


class SearchClient:
    """POSTs ``{api_key, query, max_results}`` and reads ``results``.

    ``require_key=False`` skips the credential check, for canned transports.
    """

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        *,
        client: httpx.Client | None = None,
        api_key_env: str = API_KEY_ENV,
        require_key: bool = True,
        env: Mapping[str, str] | None = None,
        retries: int = 2,
        backoff_s: float = 0.5,
        timeout_s: float = 30.0,
    ):
        self.endpoint = endpoint
        self.client = client or httpx.Client()
        self.api_key_env = api_key_env
        self.require_key = require_key
        self.env = os.environ if env is None else env
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s

    def search(self, query: str, max_results: int = DEFAULT_MAX_RESULTS) -> list[dict[str, str]]:
        if max_results < 1:
            raise ToolError(ErrorKind.INVALID_ARGS, "max_results must be positive")
        key = self.env.get(self.api_key_env, "")
        if self.require_key and not key:
            raise ToolError(ErrorKind.DENIED, f"search credential {self.api_key_env} is not set")
        payload = {"api_key": key, "query": query, "max_results": max_results}
        data = self._post(payload)
        results = data.get("results") if isinstance(data, Mapping) else None
        if not isinstance(results, list):
            raise ToolError(ErrorKind.TRANSPORT, "search response has no 'results' list")
        return [
            {"title": str(r.get("title", "")), "url": str(r.get("url", "")), "content": str(r.get("content", ""))}
            for r in results[:max_results]
            if isinstance(r, Mapping)
        ]

    def _post(self, payload: dict[str, Any]) -> Any:
        for attempt in range(self.retries + 1):
            try:
                resp = self.client.post(self.endpoint, json=payload, timeout=self.timeout_s)
            except httpx.TransportError as exc:
                error = f"search transport failure: {exc}"
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise ToolError(ErrorKind.TRANSPORT, f"search returned invalid JSON: {exc}") from exc
                if resp.status_code in (401, 403):
                    raise ToolError(ErrorKind.DENIED, f"search rejected credential (HTTP {resp.status_code})")
                error = f"search HTTP {resp.status_code}"
                if resp.status_code < 500 and resp.status_code != 429:
                    raise ToolError(ErrorKind.TRANSPORT, error)
            if attempt < self.retries:
                wait = self.backoff_s * 2**attempt
                logger.info("search retry %d/%d after %.2fs: %s", attempt + 1, self.retries, wait, error)
                time.sleep(wait)
        raise ToolError(ErrorKind.TRANSPORT, error)


def canned_search_transport(
    results: Sequence[Mapping[str, Any]] | Mapping[str, Sequence[Mapping[str, Any]]],
) -> httpx.MockTransport:
    """An httpx transport answering every search from canned data.

    ``results`` is either one list served for every query or a mapping from
    query to list, with ``"*"`` as the fallback entry.
    """

    def handler(request: httpx.Request) -> httpx.Response:
        query = json.loads(request.content or b"{}").get("query", "")
        if isinstance(results, Mapping):
            items = results.get(query, results.get("*", []))
        else:
            items = results
        return httpx.Response(200, json={"query": query, "results": list(items)})

    return httpx.MockTransport(handler)


def search_tool(client: SearchClient) -> Tool:
    def tavily_search(query: str, max_results: int = DEFAULT_MAX_RESULTS) -> str:
        return json.dumps(client.search(query, max_results), ensure_ascii=False)

    return Tool(SEARCH_SPEC, tavily_search)
