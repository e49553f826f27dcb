"""Layered configuration: built-in defaults < YAML file < OMNINOVA_* env vars < runtime overrides.

Environment keys map to config paths in upper snake case with ``__`` between
nesting levels, e.g. ``OMNINOVA_STEP_BUDGET=48`` or
``OMNINOVA_MODELS__BASIC__MODEL_NAME=my-model``. Values are parsed as YAML
scalars, so ``48`` is an int and ``true`` a bool.
"""

from __future__ import annotations

import copy
import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any
from urllib.parse import urlparse

import yaml

from .agents import SPECIALISTS
from .models import DEFAULT_AGENT_LLM_MAP, TIERS, ModelConfig, ModelTier
from .prompts import default_prompts_dir, missing_templates
from .tools.search import DEFAULT_ENDPOINT

ENV_PREFIX = "OMNINOVA_"
CORE_AGENTS = ("coordinator", "planner", "supervisor", "reporter")
_PATH_KEYS = ("prompts_dir", "sandbox_root")


class ConfigError(Exception):
    pass


class ConfigNotFound(ConfigError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(errors))
        self.errors = errors


def _default_model(model_name: str, provider: str = "openai") -> dict[str, Any]:
    params: dict[str, Any] = {"base_url": "https://api.openai.com/v1", "api_key_env": "OPENAI_API_KEY", "temperature": 0.0}
    return {"provider": provider, "model_name": model_name, "params": params}


DEFAULTS: dict[str, Any] = {
    "models": {
        "reasoning": _default_model("o3-mini"),
        "basic": _default_model("gpt-4o-mini"),
        "vision": _default_model("gpt-4o", provider="none"),
    },
    "agent_llm_map": {agent: tier.value for agent, tier in DEFAULT_AGENT_LLM_MAP.items()},
    "team_members": list(SPECIALISTS),
    "prompts_dir": None,  # packaged prompts
    "sandbox_root": "sandbox",
    "step_budget": 64,
    "tool_budget": 8,
    "history_budget": 32000,
    "search_endpoint": DEFAULT_ENDPOINT,
}


@dataclass(frozen=True)
class Config:
    models: Mapping[ModelTier, ModelConfig]
    agent_llm_map: Mapping[str, ModelTier]
    team_members: tuple[str, ...]
    prompts_dir: Path
    sandbox_root: Path
    step_budget: int
    tool_budget: int
    history_budget: int
    search_endpoint: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "models": {
                t.value: {"provider": m.provider, "model_name": m.model_name, "params": dict(m.params)}
                for t, m in sorted(self.models.items(), key=lambda kv: kv[0].value)
            },
            "agent_llm_map": {a: t.value for a, t in sorted(self.agent_llm_map.items())},
            "team_members": list(self.team_members),
            "prompts_dir": str(self.prompts_dir),
            "sandbox_root": str(self.sandbox_root),
            "step_budget": self.step_budget,
            "tool_budget": self.tool_budget,
            "history_budget": self.history_budget,
            "search_endpoint": self.search_endpoint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @property
    def agents(self) -> tuple[str, ...]:
        return (*CORE_AGENTS, *self.team_members)

    @property
    def credential_envs(self) -> tuple[str, ...]:
        names = {"TAVILY_API_KEY"}
        for m in self.models.values():
            if m.params.get("api_key_env"):
                names.add(str(m.params["api_key_env"]))
        return tuple(sorted(names))


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _nest(path: list[str], value: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    cursor = out
    for part in path[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[path[-1]] = value
    return out


def _scalar(raw: str) -> Any:
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def env_layer(env_map: Mapping[str, str], prefix: str = ENV_PREFIX) -> dict[str, Any]:
    layer: dict[str, Any] = {}
    for key in sorted(env_map):
        if not key.startswith(prefix) or len(key) == len(prefix):
            continue
        path = [p.lower() for p in key[len(prefix) :].split("__") if p]
        if path:
            layer = deep_merge(layer, _nest(path, _scalar(env_map[key])))
    return layer


def overrides_layer(overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Accepts nested mappings and/or dotted keys like ``"models.basic.model_name"``."""
    layer: dict[str, Any] = {}
    for key, value in overrides.items():
        path = str(key).split(".")
        layer = deep_merge(layer, _nest(path, value))
    return layer


def file_layer(file_path: str | Path) -> dict[str, Any]:
    path = Path(file_path)
    if not path.is_file():
        raise ConfigNotFound(f"config file {path} not found")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (yaml.YAMLError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ParseError(f"{path} must contain a key-value mapping at top level")
    data = dict(data)
    # relative paths in the file are relative to the file itself
    for key in _PATH_KEYS:
        if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
            data[key] = str((path.parent / data[key]).resolve())
    return data


def _positive_int(raw: dict[str, Any], key: str, errors: list[str]) -> int:
    value = raw.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        errors.append(f"{key} must be an integer >= 1, got {value!r}")
        return 1
    return value


def _models(raw: Any, errors: list[str]) -> dict[ModelTier, ModelConfig]:
    out: dict[ModelTier, ModelConfig] = {}
    if not isinstance(raw, Mapping):
        errors.append("models must be a mapping of tier -> model config")
        return out
    for tier_name in raw:
        if tier_name not in TIERS:
            errors.append(f"models.{tier_name}: unknown tier (expected one of {list(TIERS)})")
    for tier_name in TIERS:
        entry = raw.get(tier_name)
        where = f"models.{tier_name}"
        if not isinstance(entry, Mapping):
            errors.append(f"{where} must be a mapping")
            continue
        unknown = set(entry) - {"provider", "model_name", "params"}
        if unknown:
            errors.append(f"{where}: unknown keys {sorted(unknown)}")
        provider, name, params = entry.get("provider"), entry.get("model_name"), entry.get("params") or {}
        ok = True
        if not isinstance(provider, str):
            errors.append(f"{where}.provider must be a string")
            ok = False
        if not isinstance(name, str) or not name:
            errors.append(f"{where}.model_name must be a non-empty string")
            ok = False
        if not isinstance(params, Mapping):
            errors.append(f"{where}.params must be a mapping")
            ok = False
        else:
            if "api_key" in params:
                errors.append(f"{where}.params.api_key: inline credentials are not allowed; reference an env var via api_key_env")
                ok = False
            for k, v in params.items():
                if v is not None and not isinstance(v, (str, int, float, bool)):
                    errors.append(f"{where}.params.{k} must be a scalar")
                    ok = False
        if ok:
            out[ModelTier(tier_name)] = ModelConfig(ModelTier(tier_name), provider, name, dict(params))
    return out


def build_config(raw: Mapping[str, Any], *, extra_members: Iterable[str] = ()) -> Config:
    """Validate a merged raw mapping, reporting every violated constraint at once."""
    errors: list[str] = []
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        errors.append(f"unknown configuration keys: {sorted(unknown)}")

    models = _models(raw.get("models"), errors)

    members = raw.get("team_members")
    known = {*SPECIALISTS, *extra_members}
    team: tuple[str, ...] = ()
    if not isinstance(members, list) or not all(isinstance(m, str) for m in members) or not members:
        errors.append("team_members must be a non-empty list of agent names")
    else:
        team = tuple(members)
        if len(set(team)) != len(team):
            errors.append("team_members contains duplicates")
        strangers = [m for m in team if m not in known]
        if strangers:
            errors.append(f"team_members has agents without handlers: {strangers}")

    agent_map: dict[str, ModelTier] = {}
    raw_map = raw.get("agent_llm_map")
    if not isinstance(raw_map, Mapping):
        errors.append("agent_llm_map must be a mapping of agent -> tier")
    else:
        for agent, tier in raw_map.items():
            if tier not in TIERS:
                errors.append(f"agent_llm_map.{agent}: unknown tier {tier!r}")
            else:
                agent_map[str(agent)] = ModelTier(tier)
        for agent in (*CORE_AGENTS, *team):
            if agent not in raw_map:
                errors.append(f"agent_llm_map has no entry for {agent!r}")

    prompts_raw = raw.get("prompts_dir")
    prompts_dir = default_prompts_dir() if prompts_raw in (None, "") else Path(str(prompts_raw))
    if not prompts_dir.is_dir():
        errors.append(f"prompts_dir {prompts_dir} does not exist")
    else:
        missing = missing_templates(prompts_dir, (*CORE_AGENTS, *team))
        if missing:
            errors.append(f"prompts_dir {prompts_dir} lacks templates for {missing}")

    sandbox_raw = raw.get("sandbox_root")
    if not isinstance(sandbox_raw, str) or not sandbox_raw:
        errors.append("sandbox_root must be a non-empty path string")
        sandbox_raw = "sandbox"

    step_budget = _positive_int(raw, "step_budget", errors)
    tool_budget = _positive_int(raw, "tool_budget", errors)
    history_budget = _positive_int(raw, "history_budget", errors)

    endpoint = raw.get("search_endpoint")
    parsed = urlparse(endpoint) if isinstance(endpoint, str) else None
    if parsed is None or parsed.scheme not in ("http", "https") or not parsed.netloc:
        errors.append(f"search_endpoint must be an http(s) URL, got {endpoint!r}")

    if errors:
        raise ValidationError(errors)
    return Config(
        models=models,
        agent_llm_map=agent_map,
        team_members=team,
        prompts_dir=prompts_dir,
        sandbox_root=Path(sandbox_raw),
        step_budget=step_budget,
        tool_budget=tool_budget,
        history_budget=history_budget,
        search_endpoint=endpoint,
    )


def load_config(
    file_path: str | Path | None = None,
    env_map: Mapping[str, str] | None = None,
    runtime_overrides: Mapping[str, Any] | None = None,
    *,
    extra_members: Iterable[str] = (),
) -> Config:
    raw = copy.deepcopy(DEFAULTS)
    if file_path is not None:
        raw = deep_merge(raw, file_layer(file_path))
    raw = deep_merge(raw, env_layer(env_map or {}))
    raw = deep_merge(raw, overrides_layer(runtime_overrides or {}))
    return build_config(raw, extra_members=extra_members)
