"""The ten primary acceptance criteria, one test each."""

from __future__ import annotations

import json
import logging
import random
import string
import time

import pytest

from _acceptance import criterion
from _config_matrix import matrix, observed
from _corpus import build_corpus
from _fixtures import COORDINATOR_CASES, IRREPARABLE_PLANS, model_configs, repairable_plans, scripted_context, team_state
from _graphs import check_properties, execute, random_graph
from _safety import escape_attempts
from tierflow.agents import coordinator_node, planner_node
from tierflow.config import load_config
from tierflow.graph import END, Message, write_trace
from tierflow.harness import METRIC_FIELDS, AblationMode, ScenarioFixture, bundled_scenario, read_metrics, replay, write_metrics
from tierflow.json_repair import Unrepairable, repair, strict_loads, to_canonical_text
from tierflow.models import MockBackend, ModelLayer, chat, chat_stream
from tierflow.tools import ErrorKind, Executor, Sandbox, ToolRegistry, invoke
from tierflow.tools.files import file_tools

CASE_STUDY_PATH = [
    "coordinator", "planner", "supervisor", "researcher", "supervisor", "browser", "supervisor", "coder",
    "supervisor", "researcher", "supervisor", "reporter", "supervisor", END,
]


@pytest.fixture
def config(tmp_path):
    return load_config(runtime_overrides={"sandbox_root": str(tmp_path / "sandbox")})


def trace_bytes(trace, tmp_path, i):
    path = tmp_path / f"trace{i}.ndjson"
    write_trace(trace, path)
    return path.read_bytes()


@criterion(1, "routing conformance")
def test_routing_conformance(config, tmp_path):
    fixture = ScenarioFixture.load(bundled_scenario("case_study"))
    started = time.perf_counter()
    runs = [replay(config, fixture) for _ in range(3)]
    elapsed = time.perf_counter() - started
    for result in runs:
        assert [e.node for e in result.trace] + [result.trace[-1].goto] == CASE_STUDY_PATH
    blobs = {trace_bytes(r.trace, tmp_path, i) for i, r in enumerate(runs)}
    assert len(blobs) == 1, "traces differ between runs"
    assert elapsed < 5.0
    return f"13-step path matched, 3 byte-identical traces in {elapsed:.2f}s"


@criterion(2, "coordinator gate")
def test_coordinator_gate():
    assert len(COORDINATOR_CASES) == 20 and sum(h for _, h in COORDINATOR_CASES) == 10
    correct = 0
    for reply, hands_off in COORDINATOR_CASES:
        _, ctx = scripted_context({"coordinator": [reply]})
        correct += coordinator_node(team_state(), ctx).goto == ("planner" if hands_off else END)
    assert correct == 20
    return "20/20 routed correctly"


@criterion(3, "planner failure path")
def test_planner_failure_path():
    assert len(IRREPARABLE_PLANS) == 10 and len(repairable_plans()) == 10
    for output in IRREPARABLE_PLANS:
        _, ctx = scripted_context({"planner": [output]})
        state = team_state()
        cmd = planner_node(state, ctx)
        assert cmd.goto == END
        assert cmd.update.get("full_plan", state.full_plan) == ""
    for output, expected in repairable_plans():
        _, ctx = scripted_context({"planner": [output]})
        cmd = planner_node(team_state(), ctx)
        assert cmd.goto == "supervisor"
        assert strict_loads(cmd.update["full_plan"]) == strict_loads(expected)
    return "10 irreparable ended with empty plan, 10 repairable reached supervisor"


@criterion(4, "JSON repair corpus")
def test_json_repair_corpus():
    corpus = build_corpus()
    assert len(corpus) == 200
    repaired = refused = 0
    for category, text, expected in corpus:
        try:
            out = repair(text)
        except Unrepairable:
            refused += 1
            assert category == "unrepairable", text
            continue
        repaired += 1
        assert strict_loads(out.text) == out.value == expected
        if category == "valid":
            assert out.applied_fixes == () and out.value == json.loads(text)
        again = repair(to_canonical_text(out.value))
        assert again.applied_fixes == () and again.value == out.value
    return f"{repaired} repaired, {refused} unrepairable, 0 crashes"


def stream_entries() -> list[dict]:
    entries = []
    for name in ("case_study", "coordinator_no_handoff", "deep_thinking", "no_planning"):
        for responses in json.loads(bundled_scenario(name).read_text())["responses"].values():
            for entry in responses:
                entry = {"content": entry} if isinstance(entry, str) else dict(entry)
                if "content" in entry and "interrupt_after" not in entry:
                    # keep content and chunking only; routing guards are irrelevant here
                    entries.append({k: entry[k] for k in ("content", "chunk_size") if k in entry})
    rng = random.Random(5)
    alphabet = string.printable + "éß中文😀​"
    while len(entries) < 50:
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120)))
        entries.append({"content": text, "chunk_size": rng.randint(1, 9)})
    return entries[:50]


@criterion(5, "stream equivalence")
def test_stream_equivalence():
    entries = stream_entries()
    assert len(entries) == 50
    streamed = ModelLayer(model_configs(), mock=MockBackend({"coder": entries})).resolve_model("coder")
    whole = ModelLayer(model_configs(), mock=MockBackend({"coder": entries})).resolve_model("coder")
    messages = [Message("user", "go")]
    for _ in entries:
        joined = "".join(chat_stream(streamed, messages))
        assert joined.encode("utf-8") == chat(whole, messages).content.encode("utf-8")
    return "50/50 byte-identical"


@criterion(6, "tier ledger")
def test_tier_ledger(config):
    fixture = ScenarioFixture.load(bundled_scenario("deep_thinking"))
    deep = replay(config, fixture)
    spenders = {e.node for e in deep.trace if e.token_usage_delta["reasoning"] > 0}
    assert deep.metrics.tokens_by_tier["reasoning"] > 0
    assert spenders == {"planner"}
    flat = replay(config, fixture, AblationMode.SINGLE_TIER)
    assert flat.metrics.tokens_by_tier["reasoning"] == 0
    return f"reasoning {deep.metrics.tokens_by_tier['reasoning']} at planner only; single_tier reasoning 0"


@criterion(7, "ablation rewiring")
def test_ablation_rewiring(config, tmp_path):
    fixture = ScenarioFixture.load(bundled_scenario("case_study"))
    results = [replay(config, fixture, mode) for mode in AblationMode]
    for result in results:
        terminal = result.metrics.completed and result.trace[-1].goto == END
        assert terminal or result.metrics.diagnostic
    out = tmp_path / "metrics.ndjson"
    write_metrics([r.metrics for r in results], out)
    records = read_metrics(out)
    assert [r["mode"] for r in records] == [m.value for m in AblationMode]
    assert all(tuple(r) == METRIC_FIELDS for r in records)
    designed = ScenarioFixture.load(bundled_scenario("no_planning"))
    full = replay(config, designed).metrics
    skipped = replay(config, designed, AblationMode.NO_PLANNING).metrics
    assert full.completed and skipped.completed and skipped.steps < full.steps
    summary = ", ".join(f"{r['mode']}={'ok' if r['completed'] else 'diagnosed'}" for r in records)
    return f"{summary}; no_planning {skipped.steps} < full {full.steps} steps"


@criterion(8, "config precedence matrix")
def test_config_precedence_matrix(tmp_path):
    cases = matrix()
    assert len(cases) == 27
    for i, case in enumerate(cases):
        directory = tmp_path / str(i)
        directory.mkdir()
        assert observed(load_config(case.write_file(directory), case.env_map(), case.overrides())) == case.expected(), case
    return "27/27 matched the precedence prediction"


SECRETS = {"TAVILY_API_KEY": "tvly-acceptance-0123456789", "OPENAI_API_KEY": "sk-acceptance-abcdefghij"}


@criterion(9, "tool safety")
def test_tool_safety(tmp_path, monkeypatch, caplog):
    # sandbox escapes
    root = tmp_path / "box"
    root.mkdir()
    attempts = escape_attempts(root)
    assert len(attempts) == 15
    registry = ToolRegistry(file_tools(Sandbox(root)))
    denied = sum(invoke(registry, "file_read", {"path": p}).error_kind is ErrorKind.DENIED for p in attempts)
    assert denied == 15

    # timeouts
    ex = Executor(tmp_path / "exec")
    worst = 0.0
    for run in (lambda: ex.exec_code("while True: pass", 1.0), lambda: ex.exec_shell("sleep 30", 1.0),
                lambda: ex.exec_shell("sleep 30 & sleep 30; wait", 1.0)):
        started = time.monotonic()
        assert run().timed_out
        worst = max(worst, time.monotonic() - started)
    assert worst < 1.0 + 2.0

    # redaction: scripted calls that carry real credential values in their arguments
    for name, value in SECRETS.items():
        monkeypatch.setenv(name, value)
    fixture = ScenarioFixture.from_dict({
        "name": "leaky",
        "query": "q",
        "responses": {
            "coordinator": ["handoff_to_planner"],
            "planner": ['{"steps": [{"agent": "researcher", "description": "d"}, {"agent": "coder", "description": "d"}]}'],
            "supervisor": ['{"next": "researcher"}', '{"next": "coder"}', '{"next": "FINISH"}'],
            "researcher": [json.dumps({"tool": "tavily_search", "args": {"query": f"key {SECRETS['TAVILY_API_KEY']}"}}), "done"],
            "coder": [json.dumps({"tool": "bash", "args": {"command": f"echo {SECRETS['OPENAI_API_KEY']} $TAVILY_API_KEY"}}), "done"],
        },
    })
    config = load_config(runtime_overrides={"sandbox_root": str(tmp_path / "sandbox")})
    with caplog.at_level(logging.DEBUG):
        result = replay(config, fixture)
    assert len(result.tool_log) == 2
    logs = result.tool_log.to_ndjson() + caplog.text
    leaks = [name for name, value in SECRETS.items() if value in logs]
    assert leaks == [], leaks
    return f"15/15 escapes denied; worst kill {worst:.2f}s for 1s timeout; 0 credential substrings in logs"


@criterion(10, "graph engine properties")
def test_graph_engine_properties():
    kinds: dict[str, int] = {}
    for seed in range(1000):
        rg = random_graph(random.Random(seed))
        out = execute(rg, 64)
        assert check_properties(rg, out, 64) == [], seed
        kinds[out.kind] = kinds.get(out.kind, 0) + 1
    return "1000 graphs: " + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
