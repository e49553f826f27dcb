"""The seven agent nodes: coordinator, planner, supervisor, three specialists, reporter.

Every handler is a function ``AgentState -> Command`` closed over an
:class:`AgentContext` that supplies models, tools, prompts and the per-run
usage ledger.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Any

from .graph import END, AgentState, Command, Handler, Message, routes_to
from .json_repair import Unrepairable, repair, to_canonical_text
from .models import ModelHandle, ModelLayer, ModelTier, Schema, UsageLedger, chat, chat_stream, structured_chat
from .prompts import PromptLibrary, apply_prompt_template, format_team_response, is_team_response, truncate_history
from .tools import SPECIALIST_TOOLS, ToolLog, ToolRegistry, invoke

logger = logging.getLogger(__name__)

HANDOFF = "handoff_to_planner"
FINISH = "FINISH"
SPECIALISTS = ("researcher", "coder", "browser")
SEARCH_HEADER = "\n\n# Search Results\n\n"
DEFAULT_TOOL_BUDGET = 8


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Router:
    next: str


def router_schema(team_members: Sequence[str]) -> Schema:
    return Schema("Router", {"next": (*team_members, "reporter", FINISH)}, Router)


@dataclass(frozen=True)
class PlanStep:
    agent: str
    description: str
    note: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Plan:
    thought: str
    title: str
    steps: tuple[PlanStep, ...]


def parse_plan(text: str, team_members: Sequence[str]) -> Plan:
    """Validate planner JSON. Unknown step keys (dependencies, resources, ...) are kept in ``extra``."""
    try:
        data = repair(text).value
    except Unrepairable as exc:
        raise PlanError(str(exc)) from exc
    if not isinstance(data, dict):
        raise PlanError("plan must be a JSON object")
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise PlanError("plan needs a non-empty 'steps' list")
    allowed = {*team_members, "reporter"}
    steps = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict):
            raise PlanError(f"step {i} is not an object")
        agent = raw.get("agent") or raw.get("agent_name")
        if agent not in allowed:
            raise PlanError(f"step {i} assigns unknown agent {agent!r}")
        extra = {k: v for k, v in raw.items() if k not in ("agent", "agent_name", "description", "note")}
        note = raw.get("note")
        steps.append(PlanStep(agent, str(raw.get("description", "")), None if note is None else str(note), extra))
    return Plan(str(data.get("thought", "")), str(data.get("title", "")), tuple(steps))


@dataclass(frozen=True)
class ReactStep:
    kind: str
    tool_name: str | None = None
    arguments: Any = None
    answer: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "tool_call" and (self.tool_name is None or self.arguments is None):
            raise ValueError("tool_call needs tool_name and arguments")
        if self.kind == "final_answer" and self.answer is None:
            raise ValueError("final_answer needs an answer")
        if self.kind not in ("tool_call", "final_answer"):
            raise ValueError(f"unknown step kind {self.kind!r}")


def parse_react_step(text: str) -> ReactStep:
    """Read ``{"tool": name, "args": {...}}`` or ``{"final_answer": text}``.

    Anything else is taken as the agent answering in plain prose.
    """
    try:
        value = repair(text).value
    except Unrepairable:
        return ReactStep("final_answer", answer=text)
    if isinstance(value, dict):
        if isinstance(value.get("tool"), str):
            return ReactStep("tool_call", tool_name=value["tool"], arguments=value.get("args", {}))
        if "final_answer" in value:
            answer = value["final_answer"]
            return ReactStep("final_answer", answer=answer if isinstance(answer, str) else to_canonical_text(answer))
    return ReactStep("final_answer", answer=text)


@dataclass
class AgentContext:
    models: ModelLayer
    tools: ToolRegistry
    prompts: PromptLibrary = field(default_factory=PromptLibrary)
    ledger: UsageLedger = field(default_factory=UsageLedger)
    tool_log: ToolLog = field(default_factory=ToolLog)
    tool_budget: int = DEFAULT_TOOL_BUDGET
    history_budget: int | None = None
    # set by the single-tier ablation: every call, deep thinking included, uses this tier
    force_tier: ModelTier | None = None

    def handle(self, agent: str, tier: ModelTier | None = None) -> ModelHandle:
        if self.force_tier is not None:
            return self.models.resolve_model(self.force_tier, agent=agent)
        if tier is not None:
            return self.models.resolve_model(tier, agent=agent)
        return self.models.resolve_model(agent)

    def render(self, name: str, state: AgentState, extra: Mapping[str, str] | None = None) -> list[Message]:
        messages = apply_prompt_template(name, state, library=self.prompts, extra=extra)
        if self.history_budget is not None:
            messages = truncate_history(messages, self.history_budget)
        return messages


def coordinator_node(state: AgentState, ctx: AgentContext) -> Command:
    messages = ctx.render("coordinator", state)
    response = chat(ctx.handle("coordinator"), messages, ledger=ctx.ledger)
    if HANDOFF in response.content:
        return Command(goto="planner")
    return Command(goto=END, update={"messages": [Message("assistant", response.content, name="coordinator")]})


def _last_user_text(state: AgentState) -> str:
    for m in reversed(state.messages):
        if m.role == "user" and m.name is None:
            return m.content
    return state.messages[-1].content if state.messages else ""


def _search_block(state: AgentState, ctx: AgentContext) -> str | None:
    result = invoke(ctx.tools, "tavily_search", {"query": _last_user_text(state)}, log=ctx.tool_log)
    if not result.ok:
        logger.warning("pre-planning search failed, planning without it: %s", result.content)
        return None
    try:
        items = json.loads(result.content)
    except ValueError:
        logger.warning("pre-planning search returned non-JSON content")
        return None
    if not isinstance(items, list):
        return None
    rows = [{"title": r.get("title", ""), "url": r.get("url", ""), "content": r.get("content", "")} for r in items if isinstance(r, dict)]
    return SEARCH_HEADER + json.dumps(rows, ensure_ascii=False)


def planner_node(state: AgentState, ctx: AgentContext) -> Command:
    messages = ctx.render("planner", state)
    # deep thinking escalates to the reasoning tier; otherwise planning is a basic-tier call
    handle = ctx.handle("planner", ModelTier.REASONING if state.deep_thinking_mode else ModelTier.BASIC)
    if state.search_before_planning:
        block = _search_block(state, ctx)
        if block is not None:
            messages[-1] = dataclasses.replace(messages[-1], content=messages[-1].content + block)
    full_response = "".join(chat_stream(handle, messages, ledger=ctx.ledger))
    try:
        plan_text = to_canonical_text(repair(full_response).value)
    except Unrepairable:
        logger.warning("planner output is not JSON; ending the run")
        return Command(goto=END, update={"messages": [Message("user", full_response, name="planner")]})
    return Command(
        goto="supervisor",
        update={"messages": [Message("user", plan_text, name="planner")], "full_plan": plan_text},
    )


def wrap_team_messages(messages: Sequence[Message], team_members: Sequence[str]) -> list[Message]:
    """Copy of ``messages`` with team-member replies wrapped once in the response format."""
    team = set(team_members)
    out = []
    for m in messages:
        if m.name in team and not is_team_response(m.content):
            m = dataclasses.replace(m, content=format_team_response(m.name, m.content))
        out.append(m)
    return out


def supervisor_node(state: AgentState, ctx: AgentContext) -> Command:
    messages = wrap_team_messages(ctx.render("supervisor", state), state.team_members)
    router = structured_chat(ctx.handle("supervisor"), messages, router_schema(state.team_members), ledger=ctx.ledger)
    goto = END if router.next == FINISH else router.next
    return Command(goto=goto, update={"next": goto})


def _tool_catalog(ctx: AgentContext, names: Sequence[str]) -> str:
    lines = []
    for spec in ctx.tools.specs(names):
        params = json.dumps(spec.param_schema.get("properties", {}), sort_keys=True)
        lines.append(f"- {spec.name}: {spec.description}\n  args: {params}")
    return "\n".join(lines) or "(no tools)"


def specialist_tools(agent_name: str, state: AgentState) -> tuple[str, ...]:
    configured = state.team_member_configurations.get(agent_name, {}).get("tools")
    if configured:
        return tuple(configured)
    return SPECIALIST_TOOLS.get(agent_name, ())


def specialist_node(agent_name: str, state: AgentState, ctx: AgentContext) -> Command:
    """React loop: ask the model, run the requested tool, feed back the observation."""
    if agent_name not in state.team_members:
        raise ValueError(f"{agent_name!r} is not on the team {state.team_members}")
    allowed = specialist_tools(agent_name, state)
    scratch = ctx.render(agent_name, state, extra={"tools": _tool_catalog(ctx, allowed)})
    handle = ctx.handle(agent_name)
    calls = 0
    while True:
        reply = chat(handle, scratch, ledger=ctx.ledger).content
        step = parse_react_step(reply)
        if step.kind == "final_answer":
            answer = step.answer
            break
        if calls >= ctx.tool_budget:
            answer = f"ToolBudgetExceeded: {agent_name} used its budget of {ctx.tool_budget} tool calls without a final answer."
            break
        calls += 1
        result = invoke(ctx.tools, step.tool_name, step.arguments, log=ctx.tool_log, allowed=allowed)
        observation = Message("tool", result.as_observation(), name=step.tool_name if step.tool_name in ctx.tools else None)
        scratch = [*scratch, Message("assistant", reply, name=agent_name), observation]
    return Command(goto="supervisor", update={"messages": [Message("user", answer, name=agent_name)]})


def reporter_node(state: AgentState, ctx: AgentContext) -> Command:
    messages = ctx.render("reporter", state)
    response = chat(ctx.handle("reporter"), messages, ledger=ctx.ledger)
    return Command(goto="supervisor", update={"messages": [Message("assistant", response.content, name="reporter")]})


def make_nodes(ctx: AgentContext, team_members: Sequence[str]) -> list[tuple[str, Handler]]:
    """Node specs for the full hierarchy, each annotated with its static goto targets."""
    unknown = [m for m in team_members if m not in SPECIALISTS]
    if unknown:
        raise ValueError(f"no handler for team member(s) {unknown}")

    def bind(fn, *args) -> Handler:
        handler = partial(fn, *args, ctx=ctx) if args else partial(fn, ctx=ctx)
        return lambda state: handler(state=state)

    nodes: list[tuple[str, Handler]] = [
        ("coordinator", routes_to("planner", END)(bind(coordinator_node))),
        ("planner", routes_to("supervisor", END)(bind(planner_node))),
        ("supervisor", routes_to(*team_members, "reporter", END)(bind(supervisor_node))),
    ]
    for member in team_members:
        nodes.append((member, routes_to("supervisor")(bind(specialist_node, member))))
    nodes.append(("reporter", routes_to("supervisor")(bind(reporter_node))))
    return nodes
