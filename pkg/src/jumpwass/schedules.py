"""Deterministic time-dependent parameters ``t -> p(t)``.

Scenario files describe every parameter either as a bare number (constant in
time) or as a small object::

    {"kind": "linear", "a": 1.0, "b": 0.5}   # a + b t
    {"kind": "exp", "a": 1.0, "b": -0.2}     # a exp(b t)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

__all__ = ["Schedule", "as_schedule"]


@dataclass(frozen=True)
class Schedule:
    kind: str = "constant"
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "exp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("schedule parameters must be finite")

    def __call__(self, t):
        if self.kind == "constant":
            return self.a if np.ndim(t) == 0 else np.full(np.shape(t), self.a)
        if self.kind == "linear":
            return self.a + self.b * t
        return self.a * np.exp(self.b * t)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.b == 0.0

    def min_on(self, horizon: float) -> float:
        # linear and exp are monotone, so endpoints suffice
        return float(min(self(0.0), self(horizon)))

    def scaled(self, factor: float) -> "Schedule":
        return Schedule(self.kind, self.a * factor, self.b if self.kind == "exp" else self.b * factor)

    def to_json(self) -> Union[float, dict]:
        if self.kind == "constant":
            return self.a
        return {"kind": self.kind, "a": self.a, "b": self.b}


def as_schedule(obj: Any) -> Schedule:
    """Coerce a number, dict or :class:`Schedule` to a :class:`Schedule`."""
    if isinstance(obj, Schedule):
        return obj
    if isinstance(obj, bool):
        raise TypeError("boolean is not a valid schedule")
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return Schedule("constant", float(obj))
    if isinstance(obj, dict):
        extra = set(obj) - {"kind", "a", "b"}
        if extra:
            raise ValueError(f"unknown schedule fields {sorted(extra)}")
        return Schedule(obj.get("kind", "constant"), float(obj.get("a", 0.0)), float(obj.get("b", 0.0)))
    raise TypeError(f"cannot interpret {obj!r} as a schedule")
