"""Compensator (Lévy) measures on the real line and their discrete stand-ins.

A :class:`LevyMeasureSpec` describes the compensator slice ``nu(t, dy)`` of a
Poisson random measure analytically. :func:`discretize` turns it into a
:class:`DiscreteMeasure` (sorted atoms with nonnegative weights), which is the
common currency of every distance computation in the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .schedules import Schedule, as_schedule

__all__ = [
    "DiscreteMeasure",
    "PointMass",
    "GammaLevy",
    "FiniteDiscrete",
    "TruncatedDensity",
    "LevyMeasureSpec",
    "discretize",
    "tilt_square",
    "pushforward",
    "tv_distance",
    "frullani_tv",
    "frullani_quadrature",
    "second_moment",
    "check_second_moment",
    "levy_from_json",
    "named_density",
]

MERGE_RTOL = 1e-12
DEFAULT_EPSILON = 1e-3
# Gauss-Legendre nodes per log-spaced panel
_PANEL_ORDER = 8


class MeasureError(ValueError):
    """Raised when a measure cannot be represented or discretized."""


# ---------------------------------------------------------------------------
# Discrete measures
# ---------------------------------------------------------------------------


def _canonical(locations, weights):
    loc = np.asarray(locations, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if loc.shape != w.shape:
        raise MeasureError("locations and weights must have the same length")
    if not np.all(np.isfinite(loc)):
        raise MeasureError("atom locations must be finite")
    if not np.all(np.isfinite(w)):
        raise MeasureError("atom weights must be finite")
    if np.any(w < 0):
        raise MeasureError("atom weights must be nonnegative")
    keep = w > 0
    loc, w = loc[keep], w[keep]
    if loc.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(loc, kind="stable")
    loc, w = loc[order], w[order]
    if loc.size > 1:
        gap = np.diff(loc)
        scale = np.maximum(np.abs(loc[:-1]), np.abs(loc[1:]))
        new_group = gap > MERGE_RTOL * scale
        if not np.all(new_group):
            group = np.concatenate([[0], np.cumsum(new_group)])
            w = np.bincount(group, weights=w)
            first = np.concatenate([[True], new_group])
            loc = loc[first]
    return loc, w


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite measure ``sum_i w_i delta_{x_i}`` with strictly increasing ``x_i``.

    Duplicate locations (up to a relative distance of ``1e-12``) are merged by
    adding weights, and zero-weight atoms are dropped. ``tolerance`` carries
    the quadrature error estimate of the discretization that produced the
    measure (zero for exact representations).
    """

    locations: np.ndarray
    weights: np.ndarray
    tolerance: float = 0.0

    def __post_init__(self):
        loc, w = _canonical(self.locations, self.weights)
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms: Sequence[Sequence[float]], tolerance: float = 0.0) -> "DiscreteMeasure":
        atoms = list(atoms)
        if not atoms:
            return cls.empty()
        arr = np.asarray(atoms, dtype=float)
        return cls(arr[:, 0], arr[:, 1], tolerance)

    @classmethod
    def empty(cls) -> "DiscreteMeasure":
        return cls(np.empty(0), np.empty(0))

    @property
    def atoms(self) -> list:
        return [(float(x), float(w)) for x, w in zip(self.locations, self.weights)]

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    @property
    def size(self) -> int:
        return int(self.locations.size)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        if self.size == 0:
            return 0.0
        return float(np.dot(self.weights, f(self.locations)))

    def moment(self, order: int) -> float:
        return self.integrate(lambda y: y**order)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        if factor < 0:
            raise MeasureError("scale factor must be nonnegative")
        return DiscreteMeasure(self.locations, self.weights * factor, self.tolerance * factor)

    def normalized(self) -> np.ndarray:
        """Cumulative probabilities of the normalized measure (for sampling)."""
        mass = self.weights.sum()
        if mass <= 0:
            return np.empty(0)
        cdf = np.cumsum(self.weights) / mass
        cdf[-1] = 1.0
        return cdf

    def to_json(self) -> list:
        return [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]

    @classmethod
    def from_json(cls, obj: list) -> "DiscreteMeasure":
        return cls.from_atoms(obj)

    def allclose(self, other: "DiscreteMeasure", rtol: float = 1e-12, atol: float = 1e-14) -> bool:
        return (
            self.size == other.size
            and np.allclose(self.locations, other.locations, rtol=rtol, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=rtol, atol=atol)
        )

    def __repr__(self):
        head = ", ".join(f"({x:.6g}, {w:.6g})" for x, w in self.atoms[:4])
        more = ", ..." if self.size > 4 else ""
        return f"DiscreteMeasure([{head}{more}], mass={self.total_mass:.6g})"


# ---------------------------------------------------------------------------
# Analytic compensator specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    """``a(t) delta_c``: jumps of mark ``c`` arriving at rate ``a(t)``."""

    rate: Schedule
    location: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rate", as_schedule(self.rate))
        if not math.isfinite(self.location):
            raise MeasureError("location must be finite")

    @property
    def time_homogeneous(self) -> bool:
        return self.rate.is_constant

    def validate(self, horizon: float) -> None:
        if self.rate.min_on(horizon) < 0:
            raise MeasureError("PointMass rate must be nonnegative on [0, T]")

    def to_json(self) -> dict:
        return {"variant": "PointMass", "rate": self.rate.to_json(), "location": self.location}


@dataclass(frozen=True)
class GammaLevy:
    """Gamma Lévy measure ``1_{y>0} exp(-alpha(t) y) / y dy``."""

    shape_rate: Schedule

    def __post_init__(self):
        object.__setattr__(self, "shape_rate", as_schedule(self.shape_rate))

    @property
    def time_homogeneous(self) -> bool:
        return self.shape_rate.is_constant

    def validate(self, horizon: float) -> None:
        if self.shape_rate.min_on(horizon) <= 0:
            raise MeasureError("GammaLevy shape_rate must be strictly positive on [0, T]")

    def density(self, t: float, y):
        alpha = self.shape_rate(t)
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-alpha * y[pos]) / y[pos]
        return out

    def to_json(self) -> dict:
        return {"variant": "GammaLevy", "shape_rate": self.shape_rate.to_json()}


@dataclass(frozen=True)
class FiniteDiscrete:
    """Finitely many marks with constant rates, ``sum_k r_k delta_{y_k}``."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(y), float(r)) for y, r in self.atoms)
        for y, r in atoms:
            if not math.isfinite(y) or not math.isfinite(r) or r < 0:
                raise MeasureError("FiniteDiscrete atoms need finite locations and nonnegative rates")
        object.__setattr__(self, "atoms", atoms)

    time_homogeneous = True

    def validate(self, horizon: float) -> None:
        pass

    def to_json(self) -> dict:
        return {"variant": "FiniteDiscrete", "atoms": [list(a) for a in self.atoms]}


_DENSITIES: dict = {}


def _register(name):
    def deco(fn):
        _DENSITIES[name] = fn
        return fn

    return deco


@_register("tempered_stable")
def _tempered_stable(c: float = 1.0, decay: float = 1.0, index: float = 0.5):
    if not (0 <= index < 2) or decay <= 0 or c < 0:
        raise MeasureError("tempered_stable needs c >= 0, decay > 0, 0 <= index < 2")

    def density(t, y):
        ay = np.abs(np.asarray(y, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(ay > 0, c * np.exp(-decay * ay) / ay ** (1.0 + index), 0.0)

    return density


@_register("gaussian")
def _gaussian(rate: float = 1.0, mean: float = 0.0, sd: float = 1.0):
    if rate < 0 or sd <= 0:
        raise MeasureError("gaussian jump density needs rate >= 0 and sd > 0")

    def density(t, y):
        z = (np.asarray(y, dtype=float) - mean) / sd
        return rate * np.exp(-0.5 * z * z) / (sd * math.sqrt(2 * math.pi))

    return density


def named_density(name: str, **params) -> Callable:
    """Look up a registered jump density ``(t, y) -> nu(t, y)`` by name."""
    try:
        factory = _DENSITIES[name]
    except KeyError:
        raise MeasureError(f"unknown density {name!r}; known: {sorted(_DENSITIES)}") from None
    return factory(**params)


@dataclass(frozen=True)
class TruncatedDensity:
    """Absolutely continuous compensator restricted to ``cutoff <= |y|``.

    ``density`` is ``(t, y) -> value`` (vectorized in ``y``). The support is
    ``[lower, upper]``. Built from a registered density via
    :meth:`from_name`, the spec is JSON-serializable.
    """

    density: Callable
    cutoff: float = DEFAULT_EPSILON
    lower: float = -50.0
    upper: float = 50.0
    time_homogeneous: bool = False
    name: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cutoff <= 0:
            raise MeasureError("TruncatedDensity cutoff must be positive")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower >= self.upper:
            raise MeasureError("TruncatedDensity needs a finite support lower < upper")

    @classmethod
    def from_name(cls, name: str, params: Optional[dict] = None, cutoff: float = DEFAULT_EPSILON,
                  lower: float = -50.0, upper: float = 50.0) -> "TruncatedDensity":
        params = dict(params or {})
        return cls(named_density(name, **params), cutoff, lower, upper, True, name, params)

    def validate(self, horizon: float) -> None:
        for t in (0.0, horizon):
            for lo, hi in self._pieces(self.cutoff):
                val, _ = integrate.quad(lambda y: float(self.density(t, np.array([y]))[0]), lo, hi, limit=200)
                if not math.isfinite(val):
                    raise MeasureError("density is not integrable on {|y| > cutoff}")

    def _pieces(self, eps):
        pieces = []
        if self.upper > eps:
            pieces.append((max(eps, self.lower), self.upper))
        if self.lower < -eps:
            pieces.append((self.lower, min(-eps, self.upper)))
        return [(lo, hi) for lo, hi in pieces if hi > lo]

    def to_json(self) -> dict:
        if self.name is None:
            raise TypeError("TruncatedDensity built from a bare callable is not serializable")
        return {
            "variant": "TruncatedDensity",
            "density": self.name,
            "params": dict(self.params),
            "cutoff": self.cutoff,
            "lower": self.lower,
            "upper": self.upper,
        }


LevyMeasureSpec = Union[PointMass, GammaLevy, FiniteDiscrete, TruncatedDensity]


def levy_from_json(obj: dict) -> LevyMeasureSpec:
    """Inverse of ``spec.to_json()``; unknown fields are rejected."""
    obj = dict(obj)
    variant = obj.pop("variant", None)
    allowed = {
        "PointMass": {"rate", "location"},
        "GammaLevy": {"shape_rate"},
        "FiniteDiscrete": {"atoms"},
        "TruncatedDensity": {"density", "params", "cutoff", "lower", "upper"},
        "None": set(),
    }
    if variant not in allowed:
        raise MeasureError(f"unknown Lévy variant {variant!r}")
    extra = set(obj) - allowed[variant]
    if extra:
        raise MeasureError(f"unknown fields for {variant}: {sorted(extra)}")
    if variant == "PointMass":
        return PointMass(as_schedule(obj.get("rate", 0.0)), float(obj.get("location", 1.0)))
    if variant == "GammaLevy":
        return GammaLevy(as_schedule(obj["shape_rate"]))
    if variant == "FiniteDiscrete":
        return FiniteDiscrete(tuple(tuple(a) for a in obj.get("atoms", [])))
    if variant == "None":
        return FiniteDiscrete(())
    return TruncatedDensity.from_name(
        obj["density"], obj.get("params"), float(obj.get("cutoff", DEFAULT_EPSILON)),
        float(obj.get("lower", -50.0)), float(obj.get("upper", 50.0)),
    )


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


def _log_panels(lo: float, hi: float, n_nodes: int):
    """Gauss-Legendre nodes/weights for ``int_lo^hi f(y) dy`` on log-spaced panels (0 < lo < hi)."""
    q = min(_PANEL_ORDER, n_nodes)
    panels = max(1, n_nodes // q)
    x, w = np.polynomial.legendre.leggauss(q)
    edges = np.linspace(math.log(lo), math.log(hi), panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    y = np.exp(s)
    # dy = y ds
    return y, ws * y


def _gamma_atoms(alpha: float, eps: float, n_nodes: int):
    upper = max(50.0 / alpha, 10 * eps)
    y, w = _log_panels(eps, upper, n_nodes)
    return y, w * np.exp(-alpha * y) / y


def _density_atoms(spec: TruncatedDensity, t: float, eps: float, n_nodes: int):
    pieces = spec._pieces(eps)
    if not pieces:
        return np.empty(0), np.empty(0)
    per_piece = max(2, n_nodes // len(pieces))
    locs, weights = [], []
    for lo, hi in pieces:
        sign = 1.0 if hi > 0 else -1.0
        a, b = sorted((abs(lo), abs(hi)))
        y, w = _log_panels(a, b, per_piece)
        y = sign * y
        dens = np.asarray(spec.density(t, y), dtype=float)
        if not np.all(np.isfinite(dens)):
            raise MeasureError("density is not finite on {|y| > cutoff}")
        if np.any(dens < 0):
            raise MeasureError("density must be nonnegative")
        locs.append(y)
        weights.append(w * dens)
    return np.concatenate(locs), np.concatenate(weights)


def _raw_atoms(spec: LevyMeasureSpec, t: float, eps: float, n_nodes: int):
    if isinstance(spec, GammaLevy):
        alpha = float(spec.shape_rate(t))
        if alpha <= 0:
            raise MeasureError("GammaLevy shape_rate must be positive")
        return _gamma_atoms(alpha, eps, n_nodes)
    return _density_atoms(spec, t, eps, n_nodes)


def discretize(spec: LevyMeasureSpec, t: float, epsilon: float = DEFAULT_EPSILON,
               n_nodes: int = 256) -> DiscreteMeasure:
    """Atoms approximating ``nu(t, dy)`` restricted to ``|y| > epsilon``.

    PointMass and FiniteDiscrete are returned exactly. Absolutely continuous
    variants use Gauss-Legendre quadrature on log-spaced panels in ``|y|``;
    the returned ``tolerance`` is the mass change against the rule with half
    as many panels.
    """
    if isinstance(spec, PointMass):
        rate = float(spec.rate(t))
        if rate < 0:
            raise MeasureError("PointMass rate must be nonnegative")
        return DiscreteMeasure([spec.location], [rate])
    if isinstance(spec, FiniteDiscrete):
        if not spec.atoms:
            return DiscreteMeasure.empty()
        return DiscreteMeasure.from_atoms(spec.atoms)
    if n_nodes < 2:
        raise MeasureError("n_nodes must be at least 2")
    if isinstance(spec, GammaLevy):
        if not epsilon > 0:
            raise MeasureError("GammaLevy needs a positive cutoff epsilon")
        eps = epsilon
    elif isinstance(spec, TruncatedDensity):
        eps = max(epsilon, spec.cutoff) if epsilon and epsilon > 0 else spec.cutoff
    else:
        raise MeasureError(f"unsupported measure spec {type(spec).__name__}")
    y, w = _raw_atoms(spec, t, eps, n_nodes)
    coarse = _raw_atoms(spec, t, eps, max(2, n_nodes // 2))[1].sum()
    mass = w.sum()
    tol = abs(mass - coarse) + 1e-13 * mass
    return DiscreteMeasure(y, w, tol)


def second_moment(spec: LevyMeasureSpec, t: float) -> float:
    """``int y^2 nu(t, dy)`` over the full (untruncated) measure."""
    if isinstance(spec, PointMass):
        return float(spec.rate(t)) * spec.location**2
    if isinstance(spec, FiniteDiscrete):
        return float(sum(r * y * y for y, r in spec.atoms))
    if isinstance(spec, GammaLevy):
        return 1.0 / float(spec.shape_rate(t)) ** 2
    total = 0.0
    for lo, hi in ((max(spec.lower, 0.0), spec.upper), (spec.lower, min(spec.upper, 0.0))):
        if hi > lo:
            val, _ = integrate.quad(lambda y: y * y * float(spec.density(t, np.array([y]))[0]), lo, hi, limit=200)
            total += val
    return total


def check_second_moment(spec: LevyMeasureSpec, horizon: float, n_times: int = 5) -> float:
    """Return ``max_t int y^2 nu(t, dy)`` on a time grid, raising if it is not finite."""
    worst = 0.0
    for t in np.linspace(0.0, horizon, n_times):
        m2 = second_moment(spec, float(t))
        if not math.isfinite(m2):
            raise MeasureError(f"second moment of the compensator is not finite at t={t:g}")
        worst = max(worst, m2)
    return worst


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------


def tilt_square(m: DiscreteMeasure) -> DiscreteMeasure:
    """``y^2 m(dy)``; atoms at zero vanish."""
    return DiscreteMeasure(m.locations, m.weights * m.locations**2, m.tolerance)


def pushforward(m: DiscreteMeasure, fn: Callable[[np.ndarray], np.ndarray]) -> DiscreteMeasure:
    """Image measure ``m o fn^{-1}``; colliding images are merged."""
    if m.size == 0:
        return m
    img = np.asarray(fn(m.locations), dtype=float)
    if img.shape != m.locations.shape:
        img = np.broadcast_to(img, m.locations.shape)
    if not np.all(np.isfinite(img)):
        raise MeasureError("pushforward map returned a non-finite value")
    return DiscreteMeasure(img, m.weights, m.tolerance)


def union_support(*measures: DiscreteMeasure):
    """Common sorted support and the weight vector of each measure on it."""
    locs = np.concatenate([m.locations for m in measures]) if measures else np.empty(0)
    if locs.size == 0:
        return np.empty(0), [np.empty(0) for _ in measures]
    owner = np.concatenate([np.full(m.size, j) for j, m in enumerate(measures)])
    weights = np.concatenate([m.weights for m in measures])
    order = np.argsort(locs, kind="stable")
    locs, owner, weights = locs[order], owner[order], weights[order]
    gap = np.diff(locs)
    scale = np.maximum(np.abs(locs[:-1]), np.abs(locs[1:]))
    new_group = gap > MERGE_RTOL * scale
    group = np.concatenate([[0], np.cumsum(new_group)])
    support = locs[np.concatenate([[True], new_group])]
    out = [np.bincount(group[owner == j], weights=weights[owner == j], minlength=support.size)
           for j in range(len(measures))]
    return support, out


def tv_distance(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Total variation norm ``||m1 - m2||`` (sum of absolute weight gaps)."""
    _, (w1, w2) = union_support(m1, m2)
    return float(np.abs(w1 - w2).sum())


def frullani_tv(alpha: float, beta: float) -> float:
    """``int_0^inf |exp(-alpha y) - exp(-beta y)| dy / y = |log(beta / alpha)|``."""
    if not (alpha > 0 and beta > 0):
        raise MeasureError("Frullani parameters must be positive")
    return abs(math.log(beta / alpha))


def frullani_quadrature(alpha: float, beta: float) -> float:
    """Adaptive quadrature of the Frullani integrand, independent of the closed form."""
    if not (alpha > 0 and beta > 0):
        raise MeasureError("Frullani parameters must be positive")
    if alpha == beta:
        return 0.0

    lo, hi = sorted((alpha, beta))

    def f(y):
        if y == 0.0:
            return hi - lo
        # -expm1 keeps the small-y difference accurate
        return math.exp(-lo * y) * -math.expm1(-(hi - lo) * y) / y

    scale = 1.0 / min(alpha, beta)
    head, _ = integrate.quad(f, 0.0, scale, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(f, scale, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return head + tail
