"""Flow derivatives ``x -> X*_{s,t}(x)`` of a jump-diffusion and their moment constants.

The Euler step ``x -> Phi(x) = x + u dt + sigma dB + m(t, x) (J - dt M1)``
(``J`` the summed jump marks of the step, ``M1`` the first moment of the
truncated compensator) is differentiated exactly, so the variations obey

    y1 <- Phi' y1
    y2 <- Phi'' y1^2 + Phi' y2
    y3 <- Phi''' y1^3 + 3 Phi'' y1 y2 + Phi' y3

with ``y1 = 1``, ``y2 = y3 = 0`` at the start time. The same noise drives
the base path, so finite differences with common random numbers reproduce
these derivatives.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .measures import DiscreteMeasure
from .rng import STREAM_FLOW
from .simulate import GridConfig, MeasureTable, ProcessSpec, draw_noise

__all__ = [
    "VariationState",
    "ConstantSet",
    "gaussian_constants",
    "variation_paths",
    "flow_recursion",
    "single_tables",
    "estimate_constants",
    "vstar_derivatives_mc",
    "DEFAULT_SAFETY",
    "REL_SE_LIMIT",
]

DEFAULT_SAFETY = 1.5
REL_SE_LIMIT = 0.2


def gaussian_constants() -> tuple:
    """``C_n = int |phi^(n-1)(y)| dy`` for ``n = 1, 2, 3`` by adaptive quadrature.

    ``phi`` is the standard normal density; ``phi'(y) = -y phi(y)`` and
    ``phi''(y) = (y^2 - 1) phi(y)``. Integrals are split where the integrand
    changes sign.
    """
    phi = norm.pdf
    c1 = integrate.quad(phi, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    c2 = 2 * integrate.quad(lambda y: y * phi(y), 0, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    inner = integrate.quad(lambda y: (1 - y * y) * phi(y), 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
    outer = integrate.quad(lambda y: (y * y - 1) * phi(y), 1, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    return c1, c2, 2 * (inner + outer)


@dataclass
class VariationState:
    """Base state and first three flow derivatives, shape ``(paths, nodes)``."""

    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray


def single_tables(spec: ProcessSpec, times: np.ndarray, epsilon: float, n_nodes: int):
    """Jump table, per-step row index and per-step compensator first moment for one process."""
    if not spec.has_jumps:
        table = MeasureTable([DiscreteMeasure.empty()])
        return table, np.zeros(len(times), dtype=np.int64), np.zeros(len(times))
    if spec.levy.time_homogeneous:
        table = MeasureTable([spec.measure_at(0.0, epsilon, n_nodes)])
        rows = np.zeros(len(times), dtype=np.int64)
    else:
        table = MeasureTable([spec.measure_at(float(t), epsilon, n_nodes) for t in times])
        rows = np.arange(len(times))
    return table, rows, table.first_moment[rows]


def flow_recursion(spec: ProcessSpec, times: np.ndarray, dt, x_start, dw, jumps, m1,
                   order: int = 3, keep: str = "sup"):
    """Propagate the Euler map and its variations.

    Parameters
    ----------
    times : (n,) left endpoints of the steps.
    dt : float or (P, n) step lengths.
    x_start : (P,) start values.
    dw : (P, n) Brownian increments.
    jumps : (P, n) summed jump marks per step.
    m1 : (n,) compensator first moments (multiplied by ``dt`` inside).
    keep : {"sup", "full", "terminal"}
        ``sup`` returns terminal values plus running maxima of ``|y1|``,
        ``|y2|``, ``|y3|``, ``|y1|^2``, ``|y1|^3``, ``|y1 y2|`` over nodes;
        ``full`` returns a :class:`VariationState` with every node.
    """
    x = np.array(x_start, dtype=float)
    p = x.shape[0]
    n = len(times)
    dt_arr = np.broadcast_to(np.asarray(dt, dtype=float), (p, n)) if np.ndim(dt) else None
    y1 = np.ones(p)
    y2 = np.zeros(p)
    y3 = np.zeros(p)
    mu, sg, mm = spec.u, spec.sigma, spec.g.multiplier
    jump_on = spec.has_jumps
    if keep == "full":
        hist = np.empty((4, p, n + 1))
        hist[:, :, 0] = [x, y1, y2, y3]
    else:
        sup = {"y1": np.abs(y1), "y2": np.zeros(p), "y3": np.zeros(p), "y1sq": y1**2, "y1cube": np.abs(y1) ** 3,
               "y1y2": np.zeros(p)}
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t = times[k]
            h = dt if dt_arr is None else dt_arr[:, k]
            w = dw[:, k]
            net = jumps[:, k] - h * m1[k] if jump_on else 0.0

            def d(j):
                out = mu.derivative(t, x, j) * h + sg.derivative(t, x, j) * w
                if jump_on:
                    out = out + mm.derivative(t, x, j) * net
                return out

            a1 = 1.0 + d(1)
            if order >= 2:
                a2 = d(2)
            if order >= 3:
                a3 = d(3)
            x_new = x + d(0)
            if order >= 3:
                y3 = a3 * y1**3 + 3.0 * a2 * y1 * y2 + a1 * y3
            if order >= 2:
                y2 = a2 * y1**2 + a1 * y2
            y1 = a1 * y1
            x = x_new
            if keep == "full":
                hist[:, :, k + 1] = [x, y1, y2, y3]
            elif keep == "sup":
                a = np.abs(y1)
                np.maximum(sup["y1"], a, out=sup["y1"])
                np.maximum(sup["y2"], np.abs(y2), out=sup["y2"])
                np.maximum(sup["y3"], np.abs(y3), out=sup["y3"])
                np.maximum(sup["y1sq"], a * a, out=sup["y1sq"])
                np.maximum(sup["y1cube"], a**3, out=sup["y1cube"])
                np.maximum(sup["y1y2"], np.abs(y1 * y2), out=sup["y1y2"])
    if keep == "full":
        return VariationState(hist[0], hist[1], hist[2], hist[3])
    term = VariationState(x, y1, y2, y3)
    return (term, sup) if keep == "sup" else term


def _flow_noise(spec: ProcessSpec, grid: GridConfig, n_paths: int, seed: Optional[int] = None,
                stream: int = STREAM_FLOW):
    times = grid.times[:-1]
    table, rows, m1 = single_tables(spec, times, grid.epsilon, grid.n_nodes)
    lam = (table.mass[rows] * grid.dt)[None, :]
    seed = grid.seed if seed is None else seed
    noise = draw_noise(seed, stream, np.arange(n_paths), lam, [table], rows)
    dw = math.sqrt(grid.dt) * noise.normals
    return times, dw, noise.jump_sums[:, 0, :], m1


def variation_paths(spec: ProcessSpec, grid: GridConfig, start_points: Sequence[float],
                    n_paths: Optional[int] = None, seed: Optional[int] = None) -> list:
    """Full :class:`VariationState` paths for each start point (shared noise across start points)."""
    n_paths = n_paths or grid.n_paths
    times, dw, jumps, m1 = _flow_noise(spec, grid, n_paths, seed)
    out = []
    for x0 in start_points:
        out.append(flow_recursion(spec, times, grid.dt, np.full(n_paths, float(x0)), dw, jumps, m1, keep="full"))
    return out


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

_CONSTANT_SOURCES = {"A1": "y2", "A2": "y1sq", "B1": "y3", "B2": "y1y2", "B3": "y1cube"}


@dataclass(frozen=True)
class ConstantSet:
    """Flow-moment constants with Gaussian constants and provenance."""

    A1: float
    A2: float
    B1: float
    B2: float
    B3: float
    C1: float = 1.0
    C2: float = math.sqrt(2.0 / math.pi)
    C3: float = 4.0 * float(norm.pdf(1.0))
    std_errors: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("A1", "A2", "B1", "B2", "B3", "C1", "C2", "C3"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"constant {name} must be finite and nonnegative, got {v}")

    @classmethod
    def uniform(cls, value: float = 1.0, **kwargs) -> "ConstantSet":
        """All five flow constants equal to ``value``."""
        return cls(value, value, value, value, value, **kwargs)

    @property
    def flagged(self) -> list:
        return list(self.metadata.get("flags", []))

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "ConstantSet":
        allowed = {"A1", "A2", "B1", "B2", "B3", "C1", "C2", "C3", "std_errors", "metadata"}
        extra = set(obj) - allowed
        if extra:
            raise ValueError(f"unknown ConstantSet fields {sorted(extra)}")
        return cls(**obj)


def default_start_grid(x0: float, count: int = 9) -> np.ndarray:
    """``count`` points on ``[x0/2, 2 x0]`` (``[-1, 1]`` around zero when ``x0 = 0``)."""
    if x0 == 0:
        return np.linspace(-1.0, 1.0, count)
    lo, hi = sorted((x0 / 2, 2 * x0))
    return np.linspace(lo, hi, count)


def estimate_constants(spec: ProcessSpec, grid: GridConfig, start_grid: Optional[Sequence[float]] = None,
                       n_paths: Optional[int] = None, safety: float = DEFAULT_SAFETY,
                       seed: Optional[int] = None) -> ConstantSet:
    """Monte Carlo estimates of the flow-moment constants of ``spec``.

    For each start point the running maxima over grid nodes of ``|y2|``,
    ``y1^2``, ``|y3|``, ``|y1 y2|`` and ``|y1|^3`` are averaged over paths;
    each constant is the largest mean over the start grid times ``safety``.
    Constants whose relative standard error exceeds 20% are listed in
    ``metadata["flags"]`` and trigger a warning.
    """
    n_paths = n_paths or grid.n_paths
    starts = default_start_grid(spec.x0) if start_grid is None else np.asarray(start_grid, dtype=float)
    times, dw, jumps, m1 = _flow_noise(spec, grid, n_paths, seed)
    means = {k: np.zeros(starts.size) for k in ("y1", "y2", "y3", "y1sq", "y1cube", "y1y2")}
    ses = {k: np.zeros(starts.size) for k in means}
    mean_y1 = np.zeros(starts.size)
    bad_paths = 0
    for i, x0 in enumerate(starts):
        term, sup = flow_recursion(spec, times, grid.dt, np.full(n_paths, x0), dw, jumps, m1)
        ok = np.isfinite(term.x) & np.isfinite(term.y3) & np.isfinite(term.y2)
        bad_paths += int((~ok).sum())
        for key, vals in sup.items():
            v = vals[ok]
            means[key][i] = v.mean()
            ses[key][i] = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
        mean_y1[i] = np.abs(term.y1[ok]).mean()
    values, std_errors, raw, flags = {}, {}, {}, []
    for name, src in _CONSTANT_SOURCES.items():
        j = int(np.argmax(means[src]))
        raw[name] = float(means[src][j])
        values[name] = safety * raw[name]
        std_errors[name] = safety * float(ses[src][j])
        if raw[name] > 1e-12 and std_errors[name] > REL_SE_LIMIT * values[name]:
            flags.append(name)
    if flags:
        warnings.warn(f"relative standard error above {REL_SE_LIMIT:.0%} for {flags}", RuntimeWarning, stacklevel=2)
    c1, c2, c3 = gaussian_constants()
    metadata = {
        "n_paths": n_paths,
        "start_grid": [float(s) for s in starts],
        "safety_factor": safety,
        "seed": grid.seed if seed is None else seed,
        "grid": grid.to_json(),
        "raw": raw,
        "sup_y1_sq_mean_abs_y1_terminal": [float(v) for v in mean_y1],
        "sup_y2_raw": [float(v) for v in means["y2"]],
        "diverged_paths": bad_paths,
        "flags": flags,
    }
    return ConstantSet(C1=c1, C2=c2, C3=c3, std_errors=std_errors, metadata=metadata, **values)


# ---------------------------------------------------------------------------
# Derivatives of v*(t, x) = E h(X*_{t,T}(x))
# ---------------------------------------------------------------------------


def vstar_derivatives_mc(spec: ProcessSpec, h, t: float, x: float, n_paths: int, grid: GridConfig,
                         seed: Optional[int] = None, stream: int = STREAM_FLOW) -> dict:
    """Estimates of ``v*``, ``dv*/dx`` and ``d2v*/dx2`` at ``(t, x)`` with standard errors.

    ``h`` must provide ``h.derivative(x, k)`` for ``k = 0, 1, 2``. The flow runs
    from ``t`` to the grid horizon in ``ceil((T - t)/dt)`` equal steps.
    """
    horizon = grid.horizon
    if not 0 <= t <= horizon:
        raise ValueError("t must lie in [0, T]")
    m = max(1, math.ceil((horizon - t) / grid.dt - 1e-9))
    step = (horizon - t) / m
    times = t + step * np.arange(m)
    table, rows, m1 = single_tables(spec, times, grid.epsilon, grid.n_nodes)
    lam = (table.mass[rows] * step)[None, :]
    seed = grid.seed if seed is None else seed
    noise = draw_noise(seed, stream, np.arange(n_paths), lam, [table], rows)
    term = flow_recursion(spec, times, step, np.full(n_paths, float(x)), math.sqrt(step) * noise.normals,
                          noise.jump_sums[:, 0, :], m1, order=2, keep="terminal")
    h0 = h.derivative(term.x, 0)
    h1 = h.derivative(term.x, 1)
    h2 = h.derivative(term.x, 2)
    d1 = h1 * term.y1
    d2 = h1 * term.y2 + h2 * term.y1**2

    def stats(v):
        v = np.asarray(v, dtype=float)
        return float(v.mean()), (float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)

    (v0, s0), (v1, s1), (v2, s2) = stats(h0), stats(d1), stats(d2)
    return {"v": v0, "v_se": s0, "d1": v1, "d1_se": s1, "d2": v2, "d2_se": s2,
            "y1_mean": float(term.y1.mean()), "y2_mean": float(term.y2.mean())}
