"""File reading and writing confined to a sandbox root."""

from __future__ import annotations

import os
from pathlib import Path

from .base import ErrorKind, Tool, ToolError, ToolSpec


class Sandbox:
    def __init__(self, root: str | Path):
        self.root = Path(root).resolve()

    def resolve(self, path: str) -> Path:
        """Map ``path`` to a real location under the root or raise a denied ToolError.

        Symlinks are resolved before the containment check.
        """
        if not isinstance(path, str) or not path or "\x00" in path:
            raise ToolError(ErrorKind.DENIED, f"invalid path {path!r}")
        candidate = Path(path)
        if not candidate.is_absolute():
            candidate = self.root / candidate
        target = Path(os.path.realpath(candidate))
        if target != self.root and self.root not in target.parents:
            raise ToolError(ErrorKind.DENIED, f"path {path!r} escapes the sandbox")
        return target

    def file_read(self, path: str) -> str:
        target = self.resolve(path)
        try:
            return target.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"not found: {path}") from exc
        except (OSError, UnicodeDecodeError) as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"cannot read {path}: {exc}") from exc

    def file_write(self, path: str, content: str) -> str:
        target = self.resolve(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            # the parent chain may itself contain a symlink created by earlier code
            self.resolve(str(target))
            target.write_text(content, encoding="utf-8")
        except OSError as exc:
            raise ToolError(ErrorKind.TRANSPORT, f"cannot write {path}: {exc}") from exc
        return f"wrote {len(content.encode('utf-8'))} bytes to {target.relative_to(self.root)}"


READ_SPEC = ToolSpec(
    name="file_read",
    description="Read a UTF-8 text file inside the working directory.",
    param_schema={
        "type": "object",
        "properties": {"path": {"type": "string"}},
        "required": ["path"],
        "additionalProperties": False,
    },
)

WRITE_SPEC = ToolSpec(
    name="file_write",
    description="Write a UTF-8 text file inside the working directory, creating parent folders.",
    param_schema={
        "type": "object",
        "properties": {"path": {"type": "string"}, "content": {"type": "string"}},
        "required": ["path", "content"],
        "additionalProperties": False,
    },
)


def file_tools(sandbox: Sandbox) -> list[Tool]:
    return [Tool(READ_SPEC, sandbox.file_read), Tool(WRITE_SPEC, sandbox.file_write)]
