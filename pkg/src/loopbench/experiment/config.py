"""Experiment configuration: environments, agents, planner variants, seeds."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from ..agents import ErrorModel, NoisyAgent, OracleAgent, RemoteAgent, RemoteConfig
from ..loop import CLOSED_LOOP, OPEN_LOOP, LoopConfig, control_horizon_for
from ..metrics import DENOMINATORS
from .envspec import BUNDLED

VARIANTS = ("OL", "CL-F", "CL-H", "CL-S", "CL-F-NWS", "CL-H-NWS", "CL-S-NWS")
_HORIZON = {"F": "full", "H": "half", "S": "short"}


class ConfigError(ValueError):
    pass


def loop_config(variant: str, k: int) -> LoopConfig:
    """LoopConfig for a variant label such as ``CL-S`` or ``CL-H-NWS``."""
    if variant == "OL":
        return LoopConfig(OPEN_LOOP, initial_plan_source="shared_open_loop")
    parts = variant.split("-")
    if variant not in VARIANTS or parts[0] != "CL":
        raise ConfigError(f"unknown planner variant {variant!r}")
    return LoopConfig(
        CLOSED_LOOP,
        control_horizon_for(_HORIZON[parts[1]], k),
        warm_start=len(parts) == 2,
        initial_plan_source="shared_open_loop",
    )


_AGENT = {
    "type": "object",
    "required": ["name", "type"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "type": {"enum": ["oracle", "noisy", "remote"]},
        "p_geo": {"type": "number", "minimum": 0, "maximum": 1},
        "p_log": {"type": "number", "minimum": 0, "maximum": 1},
        "memoryful": {"type": "boolean"},
        "seed": {"type": "integer"},
        "geo_offset": {"type": "number", "minimum": 0},
        "endpoint": {"type": "string"},
        "model": {"type": "string"},
        "api_key_env": {"type": "string"},
        "temperature": {"type": "number"},
        "timeout": {"type": "number", "exclusiveMinimum": 0},
        "max_retries": {"type": "integer", "minimum": 0},
        "parse_retries": {"type": "integer", "minimum": 0},
        "min_interval": {"type": "number", "minimum": 0},
        "backoff": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "envs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "agents": {"type": "array", "items": _AGENT, "minItems": 1},
        "variants": {"type": "array", "items": {"enum": list(VARIANTS)}, "minItems": 1, "uniqueItems": True},
        "n_trials": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer"},
        "out": {"type": "string"},
        "parallelism": {"type": "integer", "minimum": 1},
        "correction_denominator": {"enum": list(DENOMINATORS)},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class AgentSpec:
    name: str
    type: str
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def build(self):
        if self.type == "oracle":
            return OracleAgent(self.name)
        if self.type == "noisy":
            return NoisyAgent(ErrorModel(**self.params), self.name)
        if self.type == "remote":
            if "endpoint" not in self.params or "model" not in self.params:
                raise ConfigError(f"remote agent {self.name!r} needs endpoint and model")
            return RemoteAgent(RemoteConfig(**self.params), self.name)
        raise ConfigError(f"unknown agent type {self.type!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type, **self.params}


@dataclass(frozen=True)
class ExperimentConfig:
    envs: tuple[str, ...] = BUNDLED
    agents: tuple[AgentSpec, ...] = (AgentSpec("oracle", "oracle"),)
    variants: tuple[str, ...] = VARIANTS
    n_trials: int = 50
    base_seed: int = 0
    out: str = "results"
    parallelism: int = 1
    correction_denominator: str = "opportunities"

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if not self.variants:
            raise ConfigError("at least one planner variant is required")
        if not self.envs or not self.agents:
            raise ConfigError("at least one environment and one agent are required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown planner variant {v!r}")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError("agent names must be unique")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.correction_denominator not in DENOMINATORS:
            raise ConfigError(f"unknown correction denominator {self.correction_denominator!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(exc.message) from None
        kwargs = {k: v for k, v in data.items() if k != "agents"}
        for k in ("envs", "variants"):
            if k in kwargs:
                kwargs[k] = tuple(kwargs[k])
        if "agents" in data:
            kwargs["agents"] = tuple(
                AgentSpec(a["name"], a["type"], {k: v for k, v in a.items() if k not in ("name", "type")})
                for a in data["agents"]
            )
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "envs": list(self.envs),
            "agents": [a.to_dict() for a in self.agents],
            "variants": list(self.variants),
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "out": self.out,
            "parallelism": self.parallelism,
            "correction_denominator": self.correction_denominator,
        }
