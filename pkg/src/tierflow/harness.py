"""Workflow assembly, ablation rewiring and scripted scenario replay with metrics.

A scenario fixture is one JSON file holding the scripted model responses,
canned tool data and the expected node path::

    {"name": "...", "query": "...",
     "flags": {"deep_thinking": false, "search_before_planning": false},
     "responses": {"coordinator": [...], "planner": [...], ...},
     "tools": {"search": [...] | {"query": [...], "*": [...]},
               "pages": {"url": "html"}, "browser_pages": {"url": "html"}},
     "expected_path": ["coordinator", ..., "__end__"]}
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import tempfile
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import httpx

from .agents import AgentContext, make_nodes, parse_plan
from .config import Config
from .graph import END, AgentState, Command, Handler, Message, RunError, TraceEvent, WorkflowGraph, build_graph, routes_to, run
from .models import TIERS, FixtureExhausted, MockBackend, ModelLayer, ModelTier
from .prompts import PromptLibrary
from .tools import (
    SPECIALIST_TOOLS,
    BrowserDriver,
    Fetcher,
    MockBrowserDriver,
    SearchClient,
    ToolLog,
    ToolRegistry,
    build_registry,
    canned_pages_transport,
    canned_search_transport,
)

logger = logging.getLogger(__name__)

METRIC_FIELDS = ("scenario", "mode", "completed", "steps", "tokens_by_tier", "tool_calls", "wall_ms")

MEMBER_DESCRIPTIONS = {
    "researcher": "Searches the web and reads pages to gather facts and sources.",
    "coder": "Writes and runs Python or shell code for calculation and data processing.",
    "browser": "Navigates and interacts with web pages that need more than a plain fetch.",
}


class AblationMode(str, enum.Enum):
    FULL = "full"
    NO_HIERARCHY = "no_hierarchy"
    SINGLE_TIER = "single_tier"
    NO_PLANNING = "no_planning"
    NO_SUPERVISOR = "no_supervisor"


def member_configurations(team: Sequence[str]) -> dict[str, dict[str, Any]]:
    return {
        m: {"name": m, "description": MEMBER_DESCRIPTIONS.get(m, ""), "tools": list(SPECIALIST_TOOLS.get(m, ()))}
        for m in team
    }


# ---------------------------------------------------------------------------
# ablation rewiring


def effective_config(config: Config, mode: AblationMode) -> Config:
    """The config a mode runs with. Only single_tier changes anything: every agent maps to basic."""
    if AblationMode(mode) is AblationMode.SINGLE_TIER:
        return dataclasses.replace(config, agent_llm_map={a: ModelTier.BASIC for a in config.agent_llm_map})
    return config


def _steps_done(messages: Sequence[Message], members: set[str]) -> int:
    """Replies by sequenced agents since the most recent plan."""
    count = 0
    for m in reversed(messages):
        if m.name == "planner":
            break
        if m.name in members:
            count += 1
    return count


def _sequenced(handler: Handler, sequence_of: Callable[[AgentState], Sequence[str]], members: set[str]) -> Handler:
    """Replace a goto of ``supervisor`` (or ``planner``) by the next agent of a fixed sequence."""

    def wrapped(state: AgentState) -> Command:
        command = handler(state)
        if command.goto not in ("supervisor", "planner"):
            return command
        after = state.messages
        extra = command.update.get("messages", ())
        if extra:
            after = [*state.messages, *extra]
        plan_state = dataclasses.replace(state, full_plan=command.update.get("full_plan", state.full_plan))
        sequence = sequence_of(plan_state)
        done = _steps_done(after, members)
        goto = sequence[done] if done < len(sequence) else END
        return Command(goto=goto, update=command.update)

    return wrapped


def _plan_sequence(team: Sequence[str]) -> Callable[[AgentState], list[str]]:
    def sequence(state: AgentState) -> list[str]:
        agents = [step.agent for step in parse_plan(state.full_plan, team).steps]
        if agents[-1] != "reporter":
            agents.append("reporter")
        return agents

    return sequence


def compose_nodes(ctx: AgentContext, team: Sequence[str], mode: AblationMode) -> list[tuple[str, Handler]]:
    nodes = dict(make_nodes(ctx, team))
    mode = AblationMode(mode)
    members = {*team, "reporter"}
    if mode in (AblationMode.FULL, AblationMode.SINGLE_TIER):
        return list(nodes.items())
    if mode is AblationMode.NO_PLANNING:
        coordinator = nodes["coordinator"]

        def skip_planner(state: AgentState) -> Command:
            command = coordinator(state)
            if command.goto == "planner":
                return Command(goto="supervisor", update={**command.update, "full_plan": ""})
            return command

        del nodes["planner"]
        nodes["coordinator"] = routes_to("supervisor", END)(skip_planner)
        return list(nodes.items())
    if mode is AblationMode.NO_HIERARCHY:
        flat = [*team, "reporter"]
        chain = lambda state: flat  # noqa: E731
        out = [("coordinator", routes_to(*flat, END)(_sequenced(nodes["coordinator"], chain, members)))]
        for name in flat:
            out.append((name, routes_to(*flat, END)(_sequenced(nodes[name], chain, members))))
        return out
    # no_supervisor: the plan order replaces routing decisions
    chain = _plan_sequence(team)
    out = [("coordinator", nodes["coordinator"])]
    for name in ("planner", *team, "reporter"):
        out.append((name, routes_to(*members, END)(_sequenced(nodes[name], chain, members))))
    return out


# ---------------------------------------------------------------------------
# workflow assembly


@dataclass
class Workflow:
    graph: WorkflowGraph
    context: AgentContext
    config: Config
    mode: AblationMode

    def initial_state(self, query: str, *, deep_thinking: bool = False, search_before_planning: bool = False) -> AgentState:
        team = list(self.config.team_members)
        return AgentState(
            messages=[Message("user", query)],
            team_members=team,
            team_member_configurations=member_configurations(team),
            deep_thinking_mode=deep_thinking,
            search_before_planning=search_before_planning,
        )

    def run(self, state: AgentState, step_budget: int | None = None) -> tuple[AgentState, list[TraceEvent]]:
        return run(self.graph, state, step_budget or self.config.step_budget, usage=self.context.ledger)


def build_workflow(
    config: Config,
    *,
    tools: ToolRegistry,
    mock: MockBackend | None = None,
    mode: AblationMode = AblationMode.FULL,
) -> Workflow:
    mode = AblationMode(mode)
    cfg = effective_config(config, mode)
    ctx = AgentContext(
        models=ModelLayer(cfg.models, cfg.agent_llm_map, mock=mock),
        tools=tools,
        prompts=PromptLibrary(cfg.prompts_dir),
        tool_budget=cfg.tool_budget,
        history_budget=cfg.history_budget,
        force_tier=ModelTier.BASIC if mode is AblationMode.SINGLE_TIER else None,
    )
    graph = build_graph(compose_nodes(ctx, cfg.team_members, mode), start="coordinator")
    return Workflow(graph, ctx, cfg, mode)


def live_registry(config: Config, workdir: str | Path) -> ToolRegistry:
    """Tools backed by the network: the configured search endpoint and plain HTTP fetches."""
    return build_registry(workdir, search=SearchClient(config.search_endpoint), credential_envs=config.credential_envs)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class ScenarioFixture:
    name: str
    query: str
    responses: Mapping[str, Sequence[Any]]
    deep_thinking: bool = False
    search_before_planning: bool = False
    search: Any = field(default_factory=list)
    pages: Mapping[str, str] = field(default_factory=dict)
    browser_pages: Mapping[str, str] = field(default_factory=dict)
    expected_path: tuple[str, ...] | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], default_name: str = "scenario") -> ScenarioFixture:
        if not isinstance(data, Mapping) or not isinstance(data.get("responses"), Mapping):
            raise ValueError("scenario fixture needs a 'responses' mapping")
        flags = data.get("flags", {})
        tools = data.get("tools", {})
        path = data.get("expected_path")
        return cls(
            name=str(data.get("name", default_name)),
            query=str(data.get("query", "")),
            responses=data["responses"],
            deep_thinking=bool(flags.get("deep_thinking", False)),
            search_before_planning=bool(flags.get("search_before_planning", False)),
            search=tools.get("search", []),
            pages=tools.get("pages", {}),
            browser_pages=tools.get("browser_pages", {}),
            expected_path=tuple(path) if path is not None else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> ScenarioFixture:
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), default_name=path.stem)

    def mock_backend(self) -> MockBackend:
        return MockBackend(self.responses)

    def registry(self, workdir: str | Path, credential_envs: tuple[str, ...] = ("TAVILY_API_KEY",)) -> ToolRegistry:
        search = SearchClient(client=httpx.Client(transport=canned_search_transport(self.search)), require_key=False, retries=0)
        fetcher = Fetcher(client=httpx.Client(transport=canned_pages_transport(self.pages)))
        browser: BrowserDriver = MockBrowserDriver(self.browser_pages)
        return build_registry(workdir, search=search, fetcher=fetcher, browser=browser, credential_envs=credential_envs)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled_scenario("case_study")``."""
    return Path(str(resources.files("tierflow") / "scenarios" / f"{name}.json"))


@dataclass(frozen=True)
class RunMetrics:
    scenario: str
    mode: str
    completed: bool
    steps: int
    tokens_by_tier: Mapping[str, int]
    tool_calls: int
    wall_ms: int
    diagnostic: str | None = None

    def to_record(self) -> dict[str, Any]:
        """The metrics NDJSON object; the diagnostic is reported separately."""
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "completed": self.completed,
            "steps": self.steps,
            "tokens_by_tier": {t: self.tokens_by_tier.get(t, 0) for t in TIERS},
            "tool_calls": self.tool_calls,
            "wall_ms": self.wall_ms,
        }


@dataclass
class RunResult:
    state: AgentState | None
    trace: list[TraceEvent]
    metrics: RunMetrics
    tool_log: ToolLog
    ledger_totals: dict[str, int]
    error: Exception | None = None


def is_completed(state: AgentState, trace: Sequence[TraceEvent]) -> bool:
    """Terminal path reached: a report was written, or the coordinator answered directly."""
    if not trace or trace[-1].goto != END:
        return False
    if any(m.name == "reporter" for m in state.messages):
        return True
    return len(trace) == 1 and trace[0].node == "coordinator"


def _token_totals(trace: Iterable[TraceEvent]) -> dict[str, int]:
    totals = {t: 0 for t in TIERS}
    for event in trace:
        for tier, n in event.token_usage_delta.items():
            totals[tier] = totals.get(tier, 0) + n
    return totals


def replay(config: Config, fixture: ScenarioFixture, ablation: AblationMode | str = AblationMode.FULL) -> RunResult:
    """Run ``fixture`` under ``ablation`` in a fresh sandbox directory; never raises on workflow failure."""
    mode = AblationMode(ablation)
    root = Path(config.sandbox_root)
    root.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix=f"{fixture.name}-{mode.value}-", dir=root) as workdir:
        workflow = build_workflow(config, tools=fixture.registry(workdir, config.credential_envs), mock=fixture.mock_backend(), mode=mode)
        initial = workflow.initial_state(
            fixture.query, deep_thinking=fixture.deep_thinking, search_before_planning=fixture.search_before_planning
        )
        error: Exception | None = None
        state: AgentState | None
        try:
            state, trace = workflow.run(initial)
            completed = is_completed(state, trace)
            diagnostic = None if completed else "run ended without reaching a terminal path"
        except RunError as exc:
            error, state, trace, completed = exc, exc.state, list(exc.trace), False
            cause = exc.__cause__
            diagnostic = f"fixture exhausted: {cause}" if isinstance(cause, FixtureExhausted) else str(exc)
    wall_ms = int((time.perf_counter() - started) * 1000)
    if diagnostic:
        logger.info("scenario %s [%s] did not complete: %s", fixture.name, mode.value, diagnostic)
    metrics = RunMetrics(
        scenario=fixture.name,
        mode=mode.value,
        completed=completed,
        steps=len(trace),
        tokens_by_tier=_token_totals(trace),
        tool_calls=len(workflow.context.tool_log.records),
        wall_ms=wall_ms,
        diagnostic=diagnostic,
    )
    return RunResult(state, trace, metrics, workflow.context.tool_log, workflow.context.ledger.snapshot(), error)


def run_scenario(config: Config, fixture: ScenarioFixture, ablation: AblationMode | str = AblationMode.FULL) -> RunMetrics:
    return replay(config, fixture, ablation).metrics


def write_metrics(metrics: Iterable[RunMetrics], path: str | Path) -> None:
    """Append one JSON object per run."""
    with open(path, "a", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps(m.to_record(), ensure_ascii=False) + "\n")


def read_metrics(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = [
    "METRIC_FIELDS",
    "AblationMode",
    "RunMetrics",
    "RunResult",
    "ScenarioFixture",
    "Workflow",
    "build_workflow",
    "bundled_scenario",
    "compose_nodes",
    "effective_config",
    "is_completed",
    "live_registry",
    "member_configurations",
    "read_metrics",
    "replay",
    "run_scenario",
    "write_metrics",
]
