"""Model configs, scripted contexts and scripted cases shared by agent and acceptance tests."""

from __future__ import annotations

import json

from _corpus import PROSE
from tierflow.agents import AgentContext
from tierflow.graph import AgentState, Message
from tierflow.models import MockBackend, ModelConfig, ModelLayer, ModelTier
from tierflow.tools import ToolRegistry

TEAM = ["researcher", "coder", "browser"]


def model_configs() -> dict[ModelTier, ModelConfig]:
    params = {"base_url": "http://model.test/v1", "api_key_env": "TEST_MODEL_KEY"}
    return {
        ModelTier.REASONING: ModelConfig(ModelTier.REASONING, "openai", "deep-model", params),
        ModelTier.BASIC: ModelConfig(ModelTier.BASIC, "openai", "fast-model", params),
        ModelTier.VISION: ModelConfig(ModelTier.VISION, "none", "eye-model", {}),
    }


def scripted_context(script, tools: ToolRegistry | None = None, **kw) -> tuple[MockBackend, AgentContext]:
    mock = MockBackend(script)
    ctx = AgentContext(ModelLayer(model_configs(), mock=mock), tools or ToolRegistry([]), **kw)
    return mock, ctx


def team_state(query: str = "What is the capital of France?", **kw) -> AgentState:
    base = dict(messages=[Message("user", query)], team_members=list(TEAM))
    return AgentState(**{**base, **kw})


# the routing rule is a plain case-sensitive substring test
HANDOFF_REPLIES = [
    "handoff_to_planner",
    "handoff_to_planner()",
    "Sure, handoff_to_planner now.",
    "```\nhandoff_to_planner\n```",
    '{"action": "handoff_to_planner"}',
    "  handoff_to_planner  ",
    "prefix_handoff_to_planner_suffix",
    "I'll pass this on.\nhandoff_to_planner",
    "handoff_to_planner handoff_to_planner",
    "call: handoff_to_planner.",
]
DIRECT_REPLIES = [
    "Hello! How can I help?",
    "handoff to planner",
    "handoff-to-planner",
    "HANDOFF_TO_PLANNER",
    "handoff_to_plan",
    "",
    "I can answer that myself: Paris.",
    "handoff_to_ planner",
    "planner",
    "handoff_to_plannr",
]
COORDINATOR_CASES = [(text, True) for text in HANDOFF_REPLIES] + [(text, False) for text in DIRECT_REPLIES]

PLAN = {
    "thought": "Look it up, then write it up.",
    "title": "Capital",
    "steps": [
        {"agent_name": "researcher", "title": "Search", "description": "Find the capital."},
        {"agent_name": "reporter", "title": "Report", "description": "Write the answer."},
    ],
}
PLAN_COMPACT = json.dumps(PLAN, separators=(",", ":"), ensure_ascii=False)


def _py_literal(value) -> str:
    return repr(value)  # single-quoted keys and strings


def repairable_plans() -> list[tuple[str, str]]:
    """(planner output, expected full_plan); expected values are the compact form of what was damaged."""
    pretty = json.dumps(PLAN, indent=2)
    short = {"title": "T", "steps": [{"agent_name": "coder"}]}
    cases = [
        pretty,
        f"```json\n{pretty}\n```",
        f"Here is the plan:\n{pretty}\nLet me know.",
        pretty.replace('"\n    }', '",\n    }').replace("}\n  ]", "},\n  ]"),
        _py_literal(PLAN),
        pretty.replace('"thought"', "thought").replace('"title"', "title"),
        PLAN_COMPACT[:-2],
        f"```\n{PLAN_COMPACT}\n```",
    ]
    out = [(text, PLAN_COMPACT) for text in cases]
    out.append(('{"title": "T", "steps": [{"agent_name": "coder"', json.dumps(short, separators=(",", ":"))))
    out.append(("{'title': 'T', 'steps': [{'agent_name': 'coder'},],}", json.dumps(short, separators=(",", ":"))))
    return out


IRREPARABLE_PLANS = list(PROSE)
