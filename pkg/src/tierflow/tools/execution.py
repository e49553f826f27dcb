"""Python and shell execution in a sandbox working directory.

The child runs in its own session so a timeout can kill the whole process
group, including grandchildren that would otherwise keep the pipes open.
This is process-level isolation only; use containers for untrusted code.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import tempfile
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path

from .base import ErrorKind, Tool, ToolResult, ToolSpec

DEFAULT_TIMEOUT_S = 30.0
MAX_STREAM_CHARS = 16_000


@dataclass(frozen=True)
class ExecOutcome:
    stdout: str
    stderr: str
    exit_code: int | None
    timed_out: bool = False

    def to_result(self) -> ToolResult:
        payload = json.dumps({"stdout": self.stdout, "stderr": self.stderr, "exit_code": self.exit_code}, ensure_ascii=False)
        if self.timed_out:
            return ToolResult.failure(ErrorKind.TIMEOUT, payload)
        if self.exit_code != 0:
            return ToolResult.failure(ErrorKind.NONZERO_EXIT, payload)
        return ToolResult(True, payload)


def _clip(text: str) -> str:
    if len(text) <= MAX_STREAM_CHARS:
        return text
    return text[:MAX_STREAM_CHARS] + f"\n[... clipped at {MAX_STREAM_CHARS} chars ...]"


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


class Executor:
    """Runs code and commands with ``workdir`` as cwd and a scrubbed environment."""

    def __init__(
        self,
        workdir: str | Path,
        *,
        interpreter: str = sys.executable,
        shell: str = "/bin/sh",
        scrub_env: Iterable[str] = (),
        env: Mapping[str, str] | None = None,
    ):
        self.workdir = Path(workdir)
        self.interpreter = interpreter
        self.shell = shell
        base = dict(os.environ if env is None else env)
        for name in scrub_env:
            base.pop(name, None)
        self.env = base

    def _run(self, argv: list[str], timeout_s: float) -> ExecOutcome:
        if timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        self.workdir.mkdir(parents=True, exist_ok=True)
        proc = subprocess.Popen(
            argv,
            cwd=self.workdir,
            env=self.env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
        try:
            out, err = proc.communicate(timeout=timeout_s)
            timed_out = False
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            out, err = proc.communicate()
            timed_out = True
        decode = lambda b: _clip(b.decode("utf-8", errors="replace"))  # noqa: E731
        return ExecOutcome(decode(out), decode(err), None if timed_out else proc.returncode, timed_out)

    def exec_code(self, source: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> ExecOutcome:
        self.workdir.mkdir(parents=True, exist_ok=True)
        fd, script = tempfile.mkstemp(suffix=".py", prefix="snippet_", dir=self.workdir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(source)
            return self._run([self.interpreter, script], timeout_s)
        finally:
            os.unlink(script)

    def exec_shell(self, command: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> ExecOutcome:
        return self._run([self.shell, "-c", command], timeout_s)


_TIMEOUT_PARAM = {"type": "number", "exclusiveMinimum": 0}

CODE_SPEC = ToolSpec(
    name="python_repl",
    description="Run a Python program; returns JSON {stdout, stderr, exit_code}.",
    param_schema={
        "type": "object",
        "properties": {"source": {"type": "string"}, "timeout_s": _TIMEOUT_PARAM},
        "required": ["source"],
        "additionalProperties": False,
    },
)

SHELL_SPEC = ToolSpec(
    name="bash",
    description="Run a shell command; returns JSON {stdout, stderr, exit_code}.",
    param_schema={
        "type": "object",
        "properties": {"command": {"type": "string"}, "timeout_s": _TIMEOUT_PARAM},
        "required": ["command"],
        "additionalProperties": False,
    },
)


def execution_tools(executor: Executor) -> list[Tool]:
    def python_repl(source: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> ToolResult:
        return executor.exec_code(source, timeout_s).to_result()

    def bash(command: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> ToolResult:
        return executor.exec_shell(command, timeout_s).to_result()

    return [Tool(CODE_SPEC, python_repl), Tool(SHELL_SPEC, bash)]

