"""Shared run configuration: a JSON file with schema validation (unknown
keys rejected), surfaced to the CLI with flag overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

SCHEMA_VERSION = 1

_FIELDS = {
    "seed": int,
    "judge_url": (str, type(None)),
    "editor_url": (str, type(None)),
    "verifier_url": (str, type(None)),
    "lambda_weights": list,
    "beta": float,
    "k": int,
    "sampler_steps": int,
    "workers": int,
    "learning_rate": float,
}


@dataclass
class RunConfig:
    seed: int = 0
    judge_url: str | None = None
    editor_url: str | None = None
    verifier_url: str | None = None
    lambda_weights: list = field(default_factory=lambda: [0.4, 0.2, 0.2, 0.2])
    beta: float = 0.1
    k: int = 8
    sampler_steps: int = 50
    workers: int = 4
    learning_rate: float = 0.02

    def __post_init__(self):
        if len(self.lambda_weights) != 4 or any(w < 0 for w in self.lambda_weights):
            raise ConfigError(f"config: bad lambda_weights {self.lambda_weights}")
        if self.beta <= 0 or self.k < 1 or self.sampler_steps < 1 or self.workers < 1:
            raise ConfigError("config: beta > 0, k/sampler_steps/workers >= 1 required")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            raw = json.load(f)
        unknown = set(raw) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        for key, value in raw.items():
            expected = _FIELDS[key]
            if expected is float and isinstance(value, int):
                value = float(value)
                raw[key] = value
            if not isinstance(value, expected):
                raise ConfigError(f"config: {key} has wrong type {type(value).__name__}")
        return cls(**raw)

    def to_json(self) -> dict:
        return asdict(self)
