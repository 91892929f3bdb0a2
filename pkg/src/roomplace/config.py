"""Run configuration merged from defaults, a JSON file, the environment and flags.

Later layers win: flags > environment > file > defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .agent import ModelConfig, TrainConfig
from .baselines import SolverBudget
from .energy import EnergyWeights
from .env import EnvConfig

ENV_KEYS = {
    "LAYOUT_EMBED_URL": ("providers", "embed_url"),
    "LAYOUT_SCORER_URL": ("providers", "scorer_url"),
    "LAYOUT_LLM_URL": ("providers", "llm_url"),
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "providers": {"embed_url": None, "scorer_url": None, "llm_url": None},
    "weights": {"rel": 4.0, "collision": 1.5, "oob": 0.35, "nav": 1.5, "aff": 1.5},
    "env": {"resolution": 0.25, "max_cells": 40, "tau_reject": 0.05, "tau_contain": 0.98,
            "n_retry": 8, "nav_resolution": 0.1, "delta_reward": False},
    "model": {"hidden_dim": 128, "fusion": "cross", "sff": True},
    "train": {"epochs": 50, "lr": 1e-4, "gamma": 0.99, "policy_weight": 1.0,
              "value_weight": 0.5, "aux_weight": 0.1, "entropy_weight": 0.01,
              "aux_enabled": True, "alpha": 0.5, "grad_clip": 5.0},
    "budget": {"max_attempts_per_object": 64, "backtrack_depth": 3, "iters": 2000,
               "t0": 1.0, "cooling": 0.998, "step_sigma": 0.5},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, Mapping):
                raise ConfigError(f"{where} must be an object")
            _merge(base[k], v, where)
        else:
            base[k] = v
    return base


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def resolve(cls, file_text: Optional[str] = None, env: Optional[Mapping] = None,
                flags: Optional[Mapping] = None) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if file_text:
            try:
                doc = json.loads(file_text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError("config file must hold a JSON object")
            _merge(data, doc)
        for var, (sect, key) in ENV_KEYS.items():
            if env and env.get(var):
                data[sect][key] = env[var]
        if flags:
            _merge(data, {k: v for k, v in flags.items() if v is not None and not isinstance(v, dict)})
            for k, v in flags.items():
                if isinstance(v, dict):
                    _merge(data, {k: {kk: vv for kk, vv in v.items() if vv is not None}})
        return cls(data)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def provider_env(self) -> dict:
        p = self.data["providers"]
        return {var: p[key] for var, (_, key) in ENV_KEYS.items() if p[key]}

    def weights(self) -> EnergyWeights:
        return EnergyWeights(**self.data["weights"])

    def env_config(self) -> EnvConfig:
        e = self.data["env"]
        return EnvConfig(resolution=e["resolution"], canvas_cols=e["max_cells"],
                         canvas_rows=e["max_cells"], tau_reject=e["tau_reject"],
                         tau_contain=e["tau_contain"], n_retry=e["n_retry"],
                         nav_resolution=e["nav_resolution"], delta_reward=e["delta_reward"],
                         weights=self.weights())

    def model_config(self) -> ModelConfig:
        m, e = self.data["model"], self.data["env"]
        return ModelConfig(hidden_dim=m["hidden_dim"], fusion=m["fusion"], sff=m["sff"],
                           canvas_cols=e["max_cells"], canvas_rows=e["max_cells"], seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.data["train"])

    def budget(self) -> SolverBudget:
        return SolverBudget(seed=self.seed, **self.data["budget"])

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True)
