"""Closed catalog of coefficient functions ``(t, x) -> c(t, x)``.

Each form has analytic ``x``-derivatives up to order three, which the flow
module needs for the variational recursion. Time dependence enters only
through :class:`~jumpwass.schedules.Schedule` parameters.

==============  ==============================================
form            value
==============  ==============================================
``zero``        ``0``
``constant``    ``c(t)``
``linear``      ``k(t) x``   (alias ``geometric``)
``affine``      ``c(t) + k(t) x``
``affine+bump`` ``c(t) + k(t) x + A(t) exp(-(x - m)^2 / (2 w^2))``
==============  ==============================================

Jump maps are of product form ``g(t, x, y) = m(t, x) y`` with ``m`` a
coefficient from the same catalog.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .schedules import Schedule, as_schedule

__all__ = ["Coefficient", "JumpMap", "coefficient_from_json", "jump_map_from_json"]

FORMS = ("zero", "constant", "linear", "geometric", "affine", "affine+bump")
_FIELDS = {
    "zero": (),
    "constant": ("c",),
    "linear": ("k",),
    "geometric": ("k",),
    "affine": ("c", "k"),
    "affine+bump": ("c", "k", "amp", "center", "width"),
}
_ZERO = Schedule()


@dataclass(frozen=True)
class Coefficient:
    """A coefficient ``c(t) + k(t) x + A(t) exp(-(x - m)^2 / (2 w^2))`` tagged with its catalog form."""

    form: str = "zero"
    c: Schedule = _ZERO
    k: Schedule = _ZERO
    amp: Schedule = _ZERO
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown coefficient form {self.form!r}; expected one of {FORMS}")
        if not self.width > 0 or not math.isfinite(self.width):
            raise ValueError("bump width must be positive")
        if not math.isfinite(self.center):
            raise ValueError("bump center must be finite")

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls) -> "Coefficient":
        return cls("zero")

    @classmethod
    def constant(cls, c) -> "Coefficient":
        return cls("constant", c=as_schedule(c))

    @classmethod
    def linear(cls, k) -> "Coefficient":
        return cls("linear", k=as_schedule(k))

    @classmethod
    def geometric(cls, k) -> "Coefficient":
        return cls("geometric", k=as_schedule(k))

    @classmethod
    def affine(cls, c, k) -> "Coefficient":
        return cls("affine", c=as_schedule(c), k=as_schedule(k))

    @classmethod
    def affine_bump(cls, c, k, amp, center: float = 0.0, width: float = 1.0) -> "Coefficient":
        return cls("affine+bump", as_schedule(c), as_schedule(k), as_schedule(amp), float(center), float(width))

    # -- evaluation -------------------------------------------------------
    @property
    def has_bump(self) -> bool:
        return self.form == "affine+bump" and not (self.amp.is_constant and self.amp.a == 0.0)

    @property
    def state_independent(self) -> bool:
        """True when the value does not depend on ``x``."""
        k_zero = self.k.is_constant and self.k.a == 0.0
        return k_zero and not self.has_bump

    def __call__(self, t, x):
        return self.derivative(t, x, 0)

    def derivative(self, t, x, order: int = 1):
        """``d^order/dx^order`` of the coefficient at ``(t, x)``; orders 0..3."""
        x = np.asarray(x, dtype=float)
        if order == 0:
            out = self.c(t) + self.k(t) * x
        elif order == 1:
            out = self.k(t) + 0.0 * x
        elif order in (2, 3):
            out = np.zeros_like(x)
        else:
            raise ValueError("derivative order must be 0..3")
        if self.has_bump:
            z = (x - self.center) / self.width
            bump = self.amp(t) * np.exp(-0.5 * z * z)
            # derivatives of exp(-z^2/2) are (-1)^n He_n(z) exp(-z^2/2) / w^n
            herm = (1.0, -z, z * z - 1.0, -(z**3) + 3.0 * z)[order]
            out = out + bump * herm / self.width**order
        return out if out.ndim else float(out)

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        out: dict[str, Any] = {"form": self.form}
        for name in _FIELDS[self.form]:
            value = getattr(self, name)
            out[name] = value.to_json() if isinstance(value, Schedule) else value
        return out


def coefficient_from_json(obj: Any) -> Coefficient:
    """Parse ``{"form": ..., params}``; a bare number means ``constant``."""
    if isinstance(obj, Coefficient):
        return obj
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Coefficient.constant(obj)
    if not isinstance(obj, dict) or "form" not in obj:
        raise ValueError(f"coefficient must be an object with a 'form' field, got {obj!r}")
    form = obj["form"]
    if form not in _FIELDS:
        raise ValueError(f"unknown coefficient form {form!r}")
    allowed = set(_FIELDS[form]) | {"form"}
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown fields {sorted(extra)} for coefficient form {form!r}")
    missing = set(_FIELDS[form]) - set(obj) - {"center", "width"}
    if missing:
        raise ValueError(f"coefficient form {form!r} is missing {sorted(missing)}")
    kwargs: dict[str, Any] = {}
    for name in _FIELDS[form]:
        if name in ("center", "width"):
            if name in obj:
                kwargs[name] = float(obj[name])
        elif name in obj:
            kwargs[name] = as_schedule(obj[name])
    return Coefficient(form, **kwargs)


@dataclass(frozen=True)
class JumpMap:
    """Product-form jump size ``g(t, x, y) = m(t, x) * y``."""

    multiplier: Coefficient = field(default_factory=Coefficient.zero)

    @property
    def state_independent(self) -> bool:
        return self.multiplier.state_independent

    @property
    def is_zero(self) -> bool:
        m = self.multiplier
        return m.form == "zero" or (m.state_independent and m.c.is_constant and m.c.a == 0.0)

    def __call__(self, t, x, y):
        return self.multiplier(t, x) * np.asarray(y, dtype=float)

    def at(self, t, x):
        """The map ``y -> g(t, x, y)`` for fixed ``(t, x)``."""
        m = float(self.multiplier(t, x))
        return lambda y: m * np.asarray(y, dtype=float)

    def derivative(self, t, x, y, order: int = 1):
        return self.multiplier.derivative(t, x, order) * np.asarray(y, dtype=float)

    def to_json(self) -> dict:
        return self.multiplier.to_json()


def jump_map_from_json(obj: Any) -> JumpMap:
    return obj if isinstance(obj, JumpMap) else JumpMap(coefficient_from_json(obj))
