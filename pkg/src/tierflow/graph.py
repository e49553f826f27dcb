"""Typed shared state, node registry and the Command-driven run loop."""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .json_repair import strict_loads

logger = logging.getLogger(__name__)

END = "__end__"
ROLES = ("system", "user", "assistant", "tool")
DEFAULT_STEP_BUDGET = 64


class GraphError(Exception):
    """Base class for graph construction and run failures."""


class EmptyGraph(GraphError):
    pass


class DuplicateNode(GraphError):
    pass


class UnknownField(GraphError):
    pass


class InvalidState(GraphError):
    pass


class RunError(GraphError):
    """A run stopped before reaching the end sentinel.

    ``trace`` and ``state`` hold whatever was recorded up to the failure.
    """

    def __init__(self, message: str, *, trace: Sequence[TraceEvent] = (), state: AgentState | None = None):
        super().__init__(message)
        self.trace = list(trace)
        self.state = state


class StepBudgetExceeded(RunError):
    pass


class UnknownNode(RunError):
    pass


class HandlerFailure(RunError):
    def __init__(self, node: str, step: int, cause: BaseException, **kwargs: Any):
        super().__init__(f"node {node!r} failed at step {step}: {type(cause).__name__}: {cause}", **kwargs)
        self.node = node
        self.step = step
        self.__cause__ = cause


@dataclass(frozen=True)
class Message:
    role: str
    content: str = ""
    name: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown message role {self.role!r}")
        if not isinstance(self.content, str):
            raise TypeError("message content must be a string")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.name is not None:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Message:
        return cls(role=data["role"], content=data.get("content") or "", name=data.get("name"))


@dataclass
class AgentState:
    messages: list[Message] = field(default_factory=list)
    team_members: list[str] = field(default_factory=list)
    team_member_configurations: dict[str, dict] = field(default_factory=dict)
    next: str = ""
    full_plan: str = ""
    deep_thinking_mode: bool = False
    search_before_planning: bool = False

    def validate(self) -> None:
        problems = []
        if not self.team_members:
            problems.append("team_members is empty")
        if len(set(self.team_members)) != len(self.team_members):
            problems.append("team_members has duplicates")
        if self.next and self.next not in (*self.team_members, "reporter", END):
            problems.append(f"next={self.next!r} is not a team member, 'reporter' or {END!r}")
        if self.full_plan:
            try:
                strict_loads(self.full_plan)
            except ValueError:
                problems.append("full_plan is not strict JSON")
        if problems:
            raise InvalidState("; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        return {
            "messages": [m.to_dict() for m in self.messages],
            "team_members": list(self.team_members),
            "team_member_configurations": self.team_member_configurations,
            "next": self.next,
            "full_plan": self.full_plan,
            "deep_thinking_mode": self.deep_thinking_mode,
            "search_before_planning": self.search_before_planning,
        }


STATE_FIELDS = frozenset(f.name for f in dataclasses.fields(AgentState))


@dataclass(frozen=True)
class Command:
    goto: str
    update: Mapping[str, Any] = field(default_factory=dict)


Handler = Callable[[AgentState], Command]


@dataclass(frozen=True)
class WorkflowGraph:
    nodes: Mapping[str, Handler]
    start: str


@dataclass(frozen=True)
class TraceEvent:
    step_index: int
    node: str
    goto: str
    state_digest: str
    token_usage_delta: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "node": self.node,
            "goto": self.goto,
            "state_digest": self.state_digest,
            "token_usage_delta": dict(self.token_usage_delta),
        }


def routes_to(*targets: str) -> Callable[[Handler], Handler]:
    """Declare the static goto targets of a handler so build_graph can check them."""

    def mark(handler: Handler) -> Handler:
        # wrap rather than annotate in place, so a shared handler is never relabelled
        def routed(state: AgentState) -> Command:
            return handler(state)

        functools.update_wrapper(routed, handler)
        routed.destinations = tuple(targets)  # type: ignore[attr-defined]
        return routed

    return mark


def build_graph(node_specs: Iterable[tuple[str, Handler]], start: str = "coordinator") -> WorkflowGraph:
    nodes: dict[str, Handler] = {}
    for ident, handler in node_specs:
        if ident in nodes:
            raise DuplicateNode(f"node {ident!r} registered twice")
        nodes[ident] = handler
    if not nodes:
        raise EmptyGraph("graph has no nodes")
    if start not in nodes:
        raise GraphError(f"start node {start!r} is not registered")
    for ident, handler in nodes.items():
        for target in getattr(handler, "destinations", ()):
            if target != END and target not in nodes:
                raise GraphError(f"node {ident!r} declares goto {target!r}, which is not registered")
    return WorkflowGraph(nodes=dict(nodes), start=start)


def apply_update(state: AgentState, update: Mapping[str, Any]) -> AgentState:
    """Return a new state with ``update`` merged: messages appended, other fields replaced."""
    unknown = set(update) - STATE_FIELDS
    if unknown:
        raise UnknownField(f"update names unknown field(s): {sorted(unknown)}")
    changes: dict[str, Any] = {}
    for key, value in update.items():
        if key == "messages":
            changes[key] = [*state.messages, *value]
        elif isinstance(value, list):
            changes[key] = list(value)
        elif isinstance(value, dict):
            changes[key] = dict(value)
        else:
            changes[key] = value
    if "messages" not in changes:
        changes["messages"] = list(state.messages)
    return dataclasses.replace(state, **changes)


def canonical_state_json(state: AgentState) -> str:
    return json.dumps(state.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def state_digest(state: AgentState) -> str:
    return hashlib.sha256(canonical_state_json(state).encode("utf-8")).hexdigest()


class UsageProbe(Protocol):
    def snapshot(self) -> dict[str, int]: ...


def _delta(before: Mapping[str, int], after: Mapping[str, int]) -> dict[str, int]:
    return {k: after.get(k, 0) - before.get(k, 0) for k in sorted(set(before) | set(after))}


def run(
    graph: WorkflowGraph,
    initial: AgentState,
    step_budget: int = DEFAULT_STEP_BUDGET,
    *,
    usage: UsageProbe | None = None,
) -> tuple[AgentState, list[TraceEvent]]:
    """Drive the graph from its start node until a handler routes to ``__end__``.

    ``usage`` is sampled around each handler call to fill the per-tier
    token delta of every trace event.
    """
    if step_budget < 1:
        raise ValueError("step_budget must be positive")
    initial.validate()
    state = initial
    trace: list[TraceEvent] = []
    node = graph.start
    while True:
        if len(trace) >= step_budget:
            raise StepBudgetExceeded(
                f"step budget {step_budget} exhausted before reaching {END!r} (next node {node!r})",
                trace=trace,
                state=state,
            )
        if node not in graph.nodes:
            raise UnknownNode(f"goto {node!r} is not a registered node", trace=trace, state=state)
        step = len(trace)
        before = usage.snapshot() if usage else {}
        try:
            command = graph.nodes[node](state)
            state = apply_update(state, command.update)
        except Exception as exc:
            raise HandlerFailure(node, step, exc, trace=trace, state=state) from exc
        after = usage.snapshot() if usage else {}
        trace.append(TraceEvent(step, node, command.goto, state_digest(state), _delta(before, after)))
        logger.debug("step %d: %s -> %s", step, node, command.goto)
        if command.goto == END:
            return state, trace
        node = command.goto


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_dict(), ensure_ascii=False, sort_keys=False) + "\n")


def read_trace(path: str | Path) -> list[TraceEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(TraceEvent(**json.loads(line)))
    return events
