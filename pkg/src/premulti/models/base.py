"""Model container and expected-fact tables."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..exterior import FiberedChart, VectorField
from ..sections import Section
from ..solutions import Distribution, PremultisymplecticSystem


@dataclass
class Fact:
    """One executable claim about a model.

    run() returns (value, details); the fact passes when value == expected.
    """

    name: str
    op: str
    run: Callable[[], tuple]
    expected: Any

    def evaluate(self) -> dict:
        t0 = time.perf_counter()
        value, details = self.run()
        elapsed = time.perf_counter() - t0
        return {
            "check": self.name,
            "op": self.op,
            "expected": _jsonable(self.expected),
            "value": _jsonable(value),
            "passed": bool(value == self.expected),
            "details": _jsonable(details),
            "elapsed": elapsed,
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if hasattr(x, "to_json"):
        return x.to_json()
    return x


@dataclass
class ModelSpec:
    name: str
    system: PremultisymplecticSystem
    known_kernel: List[VectorField] = field(default_factory=list)
    distributions: Dict[str, Distribution] = field(default_factory=dict)
    sections: Dict[str, Section] = field(default_factory=dict)
    facts: List[Fact] = field(default_factory=list)
    sampler: Optional[Callable[[int, int], List[np.ndarray]]] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def chart(self) -> FiberedChart:
        return self.system.chart

    def sample_points(self, count: int = 8, seed: int = 0) -> List[np.ndarray]:
        if self.sampler is not None:
            return self.sampler(count, seed)
        rng = np.random.default_rng(seed)
        return list(rng.uniform(-1.0, 1.0, size=(count, self.chart.dim)))

    def run_facts(self, check: Optional[str] = None) -> List[dict]:
        selected = [f for f in self.facts if check is None or check in f.name]
        return sorted((f.evaluate() for f in selected), key=lambda r: r["check"])


def box_sampler(dim: int, lo: float = -1.0, hi: float = 1.0):
    def sample(count: int, seed: int) -> List[np.ndarray]:
        rng = np.random.default_rng(seed)
        return list(rng.uniform(lo, hi, size=(count, dim)))

    return sample
