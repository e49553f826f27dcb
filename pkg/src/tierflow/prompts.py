"""File-based prompt templates with ``{{field}}`` injection from agent state."""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .graph import AgentState, Message
from .models import count_tokens, flatten_for_completion

AGENT_NAMES = ("coordinator", "planner", "supervisor", "researcher", "coder", "browser", "reporter")

_PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")

RESPONSE_FORMAT = "Response from {}:\n\n<response>\n{}\n</response>\n\n*Please execute the next step.*"


class PromptError(Exception):
    pass


class TemplateNotFound(PromptError):
    pass


class MalformedPlaceholder(PromptError):
    pass


class MissingContext(PromptError):
    pass


class BudgetTooSmall(PromptError):
    pass


def default_prompts_dir() -> Path:
    return Path(str(resources.files("tierflow") / "prompts"))


@dataclass(frozen=True)
class Template:
    name: str
    body: str
    required_placeholders: frozenset[str]

    def render(self, context: Mapping[str, str]) -> str:
        missing = self.required_placeholders - set(context)
        if missing:
            raise MissingContext(f"template {self.name!r} needs {sorted(missing)}")
        # single pass: substituted values are never re-scanned
        return _PLACEHOLDER.sub(lambda m: context[m.group(1)], self.body)


def scan_placeholders(body: str, name: str = "<inline>") -> frozenset[str]:
    found = set()
    pos = 0
    while True:
        start = body.find("{{", pos)
        if start < 0:
            return frozenset(found)
        end = body.find("}}", start + 2)
        inner_open = body.find("{{", start + 2)
        if end < 0 or (0 <= inner_open < end):
            raise MalformedPlaceholder(f"template {name!r}: unbalanced '{{{{' at offset {start}")
        m = _PLACEHOLDER.fullmatch(body, start, end + 2)
        if not m:
            raise MalformedPlaceholder(f"template {name!r}: bad placeholder {body[start:end + 2]!r}")
        found.add(m.group(1))
        pos = end + 2


def load_template(name: str, root: str | Path) -> Template:
    root = Path(root)
    if not root.is_dir():
        raise TemplateNotFound(f"prompt directory {root} does not exist")
    path = root / f"{name}.md"
    if not path.is_file():
        raise TemplateNotFound(f"no template {name!r} in {root}")
    body = path.read_text(encoding="utf-8")
    return Template(name, body, scan_placeholders(body, name))


def missing_templates(root: str | Path, names: Iterable[str]) -> list[str]:
    root = Path(root)
    return [n for n in names if not (root / f"{n}.md").is_file()]


def _render_value(key: str, value: Any) -> str:
    if key == "team_members":
        return ", ".join(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False, sort_keys=True)
    return str(value)


def state_context(state: AgentState, extra: Mapping[str, str] | None = None) -> dict[str, str]:
    context = {
        key: _render_value(key, value)
        for key, value in state.to_dict().items()
        if key != "messages"
    }
    context.update(extra or {})
    return context


class PromptLibrary:
    """Loads templates from one directory and caches them by name."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_prompts_dir()
        self._cache: dict[str, Template] = {}

    def get(self, name: str) -> Template:
        if name not in self._cache:
            self._cache[name] = load_template(name, self.root)
        return self._cache[name]


def apply_prompt_template(
    name: str,
    state: AgentState,
    *,
    library: PromptLibrary | None = None,
    extra: Mapping[str, str] | None = None,
    mode: str = "chat",
) -> list[Message] | str:
    """System message rendered from template ``name`` followed by the state's history.

    ``mode="completion"`` flattens the result into a single text block.
    """
    template = (library or PromptLibrary()).get(name)
    system = Message("system", template.render(state_context(state, extra)))
    messages = [system, *state.messages]
    if mode == "completion":
        return flatten_for_completion(messages)
    if mode != "chat":
        raise ValueError(f"unknown render mode {mode!r}")
    return messages


@dataclass(frozen=True)
class RenderBudget:
    max_tokens: int

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def truncate_history(messages: Sequence[Message], budget: RenderBudget | int) -> list[Message]:
    """Keep the first message plus the longest suffix of the rest that fits the budget.

    Whole messages are dropped; the first (system) message is never dropped.
    """
    max_tokens = (budget if isinstance(budget, RenderBudget) else RenderBudget(budget)).max_tokens
    if not messages:
        return []
    head, rest = messages[0], messages[1:]
    used = count_tokens(head.content)
    if used > max_tokens:
        raise BudgetTooSmall(f"system message needs {used} tokens, budget is {max_tokens}")
    kept: list[Message] = []
    for m in reversed(rest):
        cost = count_tokens(m.content)
        if used + cost > max_tokens:
            break
        used += cost
        kept.append(m)
    return [head, *reversed(kept)]


_WRAPPED = re.compile(r"Response from [^\n]*:\n\n<response>\n.*\n</response>\n\n\*Please execute the next step\.\*", re.S)


def format_team_response(agent_name: str, content: str) -> str:
    return RESPONSE_FORMAT.format(agent_name, content)


def is_team_response(content: str) -> bool:
    return _WRAPPED.fullmatch(content) is not None
