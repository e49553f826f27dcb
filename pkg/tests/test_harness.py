from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from tierflow.config import load_config
from tierflow.graph import END
from tierflow.harness import (
    METRIC_FIELDS,
    AblationMode,
    ScenarioFixture,
    build_workflow,
    bundled_scenario,
    effective_config,
    read_metrics,
    replay,
    run_scenario,
    write_metrics,
)
from tierflow.tools import ToolRegistry

SPECIALIST_PHASES = ["researcher", "browser", "coder", "researcher", "reporter"]


@pytest.fixture
def config(tmp_path):
    return load_config(runtime_overrides={"sandbox_root": str(tmp_path / "sandbox")})


def fixture(name):
    return ScenarioFixture.load(bundled_scenario(name))


def path_of(result):
    return [e.node for e in result.trace] + ([result.trace[-1].goto] if result.trace else [])


def test_five_modes():
    assert [m.value for m in AblationMode] == ["full", "no_hierarchy", "single_tier", "no_planning", "no_supervisor"]


def test_full_run_follows_the_designed_path(config):
    result = replay(config, fixture("case_study"))
    supervised = ["coordinator", "planner", "supervisor"]
    for agent in SPECIALIST_PHASES:
        supervised += [agent, "supervisor"]
    assert path_of(result) == [*supervised, END]
    assert path_of(result) == list(fixture("case_study").expected_path)
    assert result.metrics.completed and result.metrics.steps == len(result.trace) == 13
    assert result.error is None


@pytest.mark.parametrize("mode, expected", [
    ("no_hierarchy", ["coordinator", "researcher", "coder", "browser", "reporter", END]),
    ("no_supervisor", ["coordinator", "planner", *SPECIALIST_PHASES, END]),
])
def test_rewired_paths(config, mode, expected):
    result = replay(config, fixture("case_study"), mode)
    assert path_of(result) == expected
    assert result.metrics.completed


def test_no_planning_fails_with_a_diagnosis_when_supervision_needs_a_plan(config):
    result = replay(config, fixture("case_study"), "no_planning")
    assert path_of(result)[:2] == ["coordinator", "supervisor"]
    assert not result.metrics.completed
    assert "expectation" in result.metrics.diagnostic
    assert "planner" not in [e.node for e in result.trace]


def test_no_planning_takes_fewer_steps_on_its_fixture(config):
    full = run_scenario(config, fixture("no_planning"), "full")
    skipped = run_scenario(config, fixture("no_planning"), "no_planning")
    assert full.completed and skipped.completed
    assert (full.steps, skipped.steps) == (7, 6)


def test_single_tier_removes_reasoning_tokens(config):
    deep = replay(config, fixture("deep_thinking"))
    flat = replay(config, fixture("deep_thinking"), "single_tier")
    assert deep.metrics.tokens_by_tier["reasoning"] > 0
    assert {e.node for e in deep.trace if e.token_usage_delta["reasoning"]} == {"planner"}
    assert flat.metrics.tokens_by_tier["reasoning"] == 0
    assert flat.metrics.completed and deep.metrics.completed


def test_short_circuit_counts_as_complete(config):
    result = replay(config, fixture("coordinator_no_handoff"))
    assert path_of(result) == ["coordinator", END]
    assert result.metrics.completed and result.metrics.tool_calls == 0


@pytest.mark.parametrize("mode", list(AblationMode))
def test_metric_conservation(config, mode):
    result = replay(config, fixture("case_study"), mode)
    assert result.metrics.steps == len(result.trace)
    assert result.metrics.tool_calls == len(result.tool_log)
    if result.metrics.completed:
        assert dict(result.metrics.tokens_by_tier) == result.ledger_totals
    summed = {t: sum(e.token_usage_delta[t] for e in result.trace) for t in ("reasoning", "basic", "vision")}
    assert dict(result.metrics.tokens_by_tier) == summed


def test_ablation_isolation_by_config_diff():
    config = load_config(runtime_overrides={"agent_llm_map.planner": "reasoning", "agent_llm_map.supervisor": "reasoning"})
    base = config.to_dict()
    for mode in AblationMode:
        changed = {k for k, v in effective_config(config, mode).to_dict().items() if base[k] != v}
        assert changed == ({"agent_llm_map"} if mode is AblationMode.SINGLE_TIER else set()), mode
    flat = effective_config(config, "single_tier").agent_llm_map
    assert set(flat.values()) == {"basic"} and set(flat) == set(config.agent_llm_map)


@pytest.mark.parametrize("mode, nodes", [
    ("full", ["coordinator", "planner", "supervisor", "researcher", "coder", "browser", "reporter"]),
    ("single_tier", ["coordinator", "planner", "supervisor", "researcher", "coder", "browser", "reporter"]),
    ("no_planning", ["coordinator", "supervisor", "researcher", "coder", "browser", "reporter"]),
    ("no_hierarchy", ["coordinator", "researcher", "coder", "browser", "reporter"]),
    ("no_supervisor", ["coordinator", "planner", "researcher", "coder", "browser", "reporter"]),
])
def test_node_sets_per_mode(config, mode, nodes):
    assert list(build_workflow(config, tools=ToolRegistry([]), mode=mode).graph.nodes) == nodes


def test_fixture_exhaustion_is_a_diagnosed_failure(config):
    short = ScenarioFixture.from_dict({"name": "short", "query": "q", "responses": {"coordinator": ["handoff_to_planner"]}})
    metrics = run_scenario(config, short)
    assert not metrics.completed
    assert metrics.diagnostic.startswith("fixture exhausted:")
    assert metrics.steps == 1


def test_metrics_ndjson_round_trip(config, tmp_path):
    runs = [run_scenario(config, fixture("case_study"), mode) for mode in AblationMode]
    out = tmp_path / "metrics.ndjson"
    write_metrics(runs[:2], out)
    write_metrics(runs[2:], out)
    records = read_metrics(out)
    assert [r["mode"] for r in records] == [m.value for m in AblationMode]
    for record in records:
        assert tuple(record) == METRIC_FIELDS
        assert set(record["tokens_by_tier"]) == {"reasoning", "basic", "vision"}
    assert all(json.loads(line) for line in out.read_text().splitlines())


def test_parallel_runs_match_serial_runs(config):
    def stable(metrics):
        record = metrics.to_record()
        record.pop("wall_ms")
        return record

    serial = [stable(run_scenario(config, fixture("case_study"), m)) for m in AblationMode]
    with ThreadPoolExecutor(max_workers=5) as pool:
        parallel = list(pool.map(lambda m: stable(run_scenario(config, fixture("case_study"), m)), AblationMode))
    assert parallel == serial


def test_sandbox_directories_are_cleaned_up(config):
    replay(config, fixture("case_study"))
    assert list(config.sandbox_root.iterdir()) == []


def test_fixture_requires_responses():
    with pytest.raises(ValueError):
        ScenarioFixture.from_dict({"query": "q"})
