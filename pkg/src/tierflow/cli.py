"""Command line entry point.

    tierflow --query "..." [--config conf.yaml] [--mock fixture.json] [--trace-out t.ndjson]
    tierflow repair-json < almost.json
    tierflow scenario case_study --ablation all --metrics-out metrics.ndjson

Exit codes: 0 when the workflow reaches ``__end__``, 2 on a workflow error,
1 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from collections.abc import Sequence
from pathlib import Path
from typing import TextIO

from .config import Config, ConfigError, load_config
from .graph import GraphError, RunError, write_trace
from .harness import AblationMode, ScenarioFixture, build_workflow, bundled_scenario, live_registry, replay, write_metrics
from .json_repair import Unrepairable, repair, to_canonical_text

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_WORKFLOW = 2


def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tierflow", description="Run the hierarchical multi-agent workflow on one query.")
    p.add_argument("--query", required=True, help="the user request")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--deep-thinking", action="store_true", help="plan with the reasoning tier")
    p.add_argument("--search-before-planning", action="store_true", help="run a web search before planning")
    p.add_argument("--mock", metavar="FIXTURE", help="scenario fixture; replaces every model backend and tool transport")
    p.add_argument("--max-steps", type=int, help="override step_budget")
    p.add_argument("--trace-out", metavar="PATH", help="write the trace as NDJSON")
    p.add_argument("--ablation", choices=[m.value for m in AblationMode], default=AblationMode.FULL.value)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _scenario_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tierflow scenario", description="Replay a scenario fixture and print run metrics.")
    p.add_argument("fixture", help="fixture path or name of a bundled scenario")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--ablation", default=AblationMode.FULL.value, help="mode name or 'all'")
    p.add_argument("--metrics-out", metavar="PATH", help="append metrics NDJSON to this file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _load(config_path: str | None, overrides: dict[str, object], err: TextIO) -> Config | None:
    try:
        return load_config(config_path, dict(os.environ), overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return None


def _fixture(ref: str) -> ScenarioFixture:
    path = Path(ref)
    if not path.exists() and bundled_scenario(ref).exists():
        path = bundled_scenario(ref)
    return ScenarioFixture.load(path)


def final_message(state) -> str:
    """The user-facing reply: the last coordinator or reporter message, else the last message."""
    for m in reversed(state.messages):
        if m.name in ("coordinator", "reporter"):
            return m.content
    return state.messages[-1].content if state.messages else ""


def _cmd_run(argv: Sequence[str], out: TextIO, err: TextIO) -> int:
    args = _run_parser().parse_args(argv)
    _configure_logging(args.verbose)
    overrides: dict[str, object] = {}
    if args.max_steps is not None:
        overrides["step_budget"] = args.max_steps
    config = _load(args.config, overrides, err)
    if config is None:
        return EXIT_CONFIG
    fixture = None
    if args.mock:
        try:
            fixture = _fixture(args.mock)
        except (OSError, ValueError) as exc:
            print(f"config error: cannot load fixture {args.mock}: {exc}", file=err)
            return EXIT_CONFIG
    root = Path(config.sandbox_root)
    root.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix="run-", dir=root) as workdir:
        try:
            if fixture is not None:
                tools, mock = fixture.registry(workdir, config.credential_envs), fixture.mock_backend()
            else:
                tools, mock = live_registry(config, workdir), None
            workflow = build_workflow(config, tools=tools, mock=mock, mode=AblationMode(args.ablation))
            deep = args.deep_thinking or bool(fixture and fixture.deep_thinking)
            search = args.search_before_planning or bool(fixture and fixture.search_before_planning)
            state, trace = workflow.run(workflow.initial_state(args.query, deep_thinking=deep, search_before_planning=search))
        except RunError as exc:
            if args.trace_out:
                write_trace(exc.trace, args.trace_out)
            print(f"workflow error: {exc}", file=err)
            return EXIT_WORKFLOW
        except GraphError as exc:
            print(f"workflow error: {exc}", file=err)
            return EXIT_WORKFLOW
    if args.trace_out:
        write_trace(trace, args.trace_out)
    print(final_message(state), file=out)
    return EXIT_OK


def _cmd_repair(stdin: TextIO, out: TextIO, err: TextIO) -> int:
    try:
        outcome = repair(stdin.read())
    except Unrepairable as exc:
        print(f"unrepairable: {exc}", file=err)
        return 1
    print(to_canonical_text(outcome.value), file=out)
    if outcome.applied_fixes:
        print("fixes: " + ", ".join(f.value for f in outcome.applied_fixes), file=err)
    return EXIT_OK


def _cmd_scenario(argv: Sequence[str], out: TextIO, err: TextIO) -> int:
    args = _scenario_parser().parse_args(argv)
    _configure_logging(args.verbose)
    if args.ablation == "all":
        modes = list(AblationMode)
    else:
        try:
            modes = [AblationMode(args.ablation)]
        except ValueError:
            print(f"config error: unknown ablation mode {args.ablation!r}", file=err)
            return EXIT_CONFIG
    config = _load(args.config, {}, err)
    if config is None:
        return EXIT_CONFIG
    try:
        fixture = _fixture(args.fixture)
    except (OSError, ValueError) as exc:
        print(f"config error: cannot load fixture {args.fixture}: {exc}", file=err)
        return EXIT_CONFIG
    results = [replay(config, fixture, mode).metrics for mode in modes]
    for m in results:
        print(json.dumps(m.to_record(), ensure_ascii=False), file=out)
        if m.diagnostic:
            print(f"{m.mode}: {m.diagnostic}", file=err)
    if args.metrics_out:
        write_metrics(results, args.metrics_out)
    return EXIT_OK


def run_cli(args: Sequence[str], *, stdin: TextIO | None = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    stdin, stdout, stderr = stdin or sys.stdin, stdout or sys.stdout, stderr or sys.stderr
    args = list(args)
    try:
        if args and args[0] == "repair-json":
            return _cmd_repair(stdin, stdout, stderr)
        if args and args[0] == "scenario":
            return _cmd_scenario(args[1:], stdout, stderr)
        return _cmd_run(args, stdout, stderr)
    except SystemExit as exc:  # argparse usage errors and --help
        return EXIT_OK if not exc.code else EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    return run_cli(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    raise SystemExit(main())
