"""Scenario descriptions and ground-truth manifests shared by all generators.

Randomness comes from numpy's PCG64 bit generator seeded with the scenario
seed, so a spec reproduces the same bytes on every platform numpy supports.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class InvalidSpec(ValueError):
    pass


class Scenario(enum.Enum):
    PSTN_CALL = "PSTN_CALL"
    WT_SESSION = "WT_SESSION"
    SIP_LOG = "SIP_LOG"
    CDR_BATCH = "CDR_BATCH"
    USAGE_BATCH = "USAGE_BATCH"


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    seed: int = 0
    parameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in 64 bits")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def param(self, name: str, default: Any = None) -> Any:
        return self.parameters.get(name, default)

    def require(self, scenario: Scenario) -> None:
        if self.scenario is not scenario:
            raise InvalidSpec(f"expected a {scenario.value} spec, got {self.scenario.value}")


@dataclass
class Manifest:
    """Ground truth for one generated artifact."""

    scenario: Scenario
    seed: int
    data: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    def to_dict(self) -> dict:
        return {"schema": "teamsforensics.manifest/1", "scenario": self.scenario.value,
                "seed": self.seed, **self.data}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        d = json.loads(text)
        d.pop("schema", None)
        return cls(Scenario(d.pop("scenario")), d.pop("seed"), d)
