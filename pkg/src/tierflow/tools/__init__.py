"""Tool layer: registry, logging and the concrete tools."""

from __future__ import annotations

from pathlib import Path

from .base import (
    ErrorKind,
    IoLogRecord,
    Redactor,
    Tool,
    ToolError,
    ToolLog,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    invoke,
)
from .browser import BrowserDriver, FetchBrowserDriver, MockBrowserDriver, SubprocessBrowserDriver, browser_tool
from .execution import ExecOutcome, Executor, execution_tools
from .files import Sandbox, file_tools
from .search import SearchClient, canned_search_transport, search_tool
from .web import Fetcher, canned_pages_transport, fetch_tool

# default tool allowlist per specialist
SPECIALIST_TOOLS: dict[str, tuple[str, ...]] = {
    "researcher": ("tavily_search", "fetch_url"),
    "coder": ("python_repl", "bash", "file_read", "file_write"),
    "browser": ("browser", "fetch_url"),
}


def build_registry(
    workdir: str | Path,
    *,
    search: SearchClient | None = None,
    fetcher: Fetcher | None = None,
    browser: BrowserDriver | None = None,
    credential_envs: tuple[str, ...] = ("TAVILY_API_KEY",),
) -> ToolRegistry:
    """Assemble the default registry with every tool rooted at ``workdir``."""
    fetcher = fetcher or Fetcher()
    tools = [
        search_tool(search or SearchClient()),
        fetch_tool(fetcher),
        *execution_tools(Executor(workdir, scrub_env=credential_envs)),
        *file_tools(Sandbox(workdir)),
        browser_tool(browser or FetchBrowserDriver(fetcher)),
    ]
    return ToolRegistry(tools, redactor=Redactor(credential_envs))


__all__ = [
    "SPECIALIST_TOOLS",
    "BrowserDriver",
    "ErrorKind",
    "ExecOutcome",
    "Executor",
    "FetchBrowserDriver",
    "Fetcher",
    "IoLogRecord",
    "MockBrowserDriver",
    "Redactor",
    "Sandbox",
    "SearchClient",
    "SubprocessBrowserDriver",
    "Tool",
    "ToolError",
    "ToolLog",
    "ToolRegistry",
    "ToolResult",
    "ToolSpec",
    "build_registry",
    "canned_pages_transport",
    "canned_search_transport",
    "invoke",
]
