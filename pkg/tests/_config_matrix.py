"""The 27-case precedence cross: each of the file, env and override layers sets one of three keys."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import yaml

from tierflow.models import ModelTier

KEYS = ("step_budget", "tool_budget", "models.basic.model_name")
DEFAULT = {"step_budget": 64, "tool_budget": 8, "models.basic.model_name": "gpt-4o-mini"}
LAYER_VALUES = {
    "file": {"step_budget": 32, "tool_budget": 4, "models.basic.model_name": "file-model"},
    "env": {"step_budget": 48, "tool_budget": 6, "models.basic.model_name": "env-model"},
    "override": {"step_budget": 16, "tool_budget": 3, "models.basic.model_name": "override-model"},
}
PRECEDENCE = ("override", "env", "file")  # highest first
ENV_NAMES = {
    "step_budget": "OMNINOVA_STEP_BUDGET",
    "tool_budget": "OMNINOVA_TOOL_BUDGET",
    "models.basic.model_name": "OMNINOVA_MODELS__BASIC__MODEL_NAME",
}


@dataclass(frozen=True)
class MatrixCase:
    file_key: str
    env_key: str
    override_key: str

    @property
    def chosen(self) -> dict[str, str]:
        return {"file": self.file_key, "env": self.env_key, "override": self.override_key}

    def expected(self) -> dict[str, object]:
        out = {}
        for key in KEYS:
            layer = next((name for name in PRECEDENCE if self.chosen[name] == key), None)
            out[key] = DEFAULT[key] if layer is None else LAYER_VALUES[layer][key]
        return out

    def file_document(self) -> dict:
        key, value = self.file_key, LAYER_VALUES["file"][self.file_key]
        if key == "models.basic.model_name":
            # a partial model entry must merge over the default one
            return {"models": {"basic": {"model_name": value}}}
        return {key: value}

    def write_file(self, directory: Path) -> Path:
        path = directory / "conf.yaml"
        path.write_text(yaml.safe_dump(self.file_document()), encoding="utf-8")
        return path

    def env_map(self) -> dict[str, str]:
        return {ENV_NAMES[self.env_key]: str(LAYER_VALUES["env"][self.env_key])}

    def overrides(self) -> dict[str, object]:
        return {self.override_key: LAYER_VALUES["override"][self.override_key]}


def matrix() -> list[MatrixCase]:
    return [MatrixCase(*combo) for combo in itertools.product(KEYS, repeat=3)]


def observed(config) -> dict[str, object]:
    return {
        "step_budget": config.step_budget,
        "tool_budget": config.tool_budget,
        "models.basic.model_name": config.models[ModelTier.BASIC].model_name,
    }
