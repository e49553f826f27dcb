"""Hierarchical multi-agent workflow: coordinator, planner, supervisor, specialists and reporter
over a Command-driven state graph with tiered models."""

from __future__ import annotations

from .config import Config, ConfigError, load_config
from .graph import END, AgentState, Command, Message, TraceEvent, build_graph, run
from .harness import AblationMode, RunMetrics, ScenarioFixture, build_workflow, replay, run_scenario
from .json_repair import RepairOutcome, Unrepairable, repair
from .models import ModelLayer, ModelTier, chat, chat_stream, structured_chat

__version__ = "0.1.0"

__all__ = [
    "END",
    "AblationMode",
    "AgentState",
    "Command",
    "Config",
    "ConfigError",
    "Message",
    "ModelLayer",
    "ModelTier",
    "RepairOutcome",
    "RunMetrics",
    "ScenarioFixture",
    "TraceEvent",
    "Unrepairable",
    "build_graph",
    "build_workflow",
    "chat",
    "chat_stream",
    "load_config",
    "repair",
    "replay",
    "run",
    "run_scenario",
    "structured_chat",
]
