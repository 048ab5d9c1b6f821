"""Euler-Maruyama simulation of coupled jump-diffusions.

Both processes solve an SDE of the form

    dX_t = u(t, X_t) dt + sigma(t, X_t) dB_t + int g(t, X_{t-}, y) (N(dt, dy) - nu(t, dy) dt)

with product-form jump maps ``g(t, x, y) = m(t, x) y``. Small jumps
``|y| <= epsilon`` of infinite-activity measures are dropped together with
their share of the compensator, so the simulated jump part stays a
compensated martingale.

Coupling
--------
The pair ``(X, X*)`` shares its Brownian increments. Jump marks are coupled
maximally on the union support of the two (discretized) measures: the common
part ``min(w, w*)`` drives one Poisson stream whose jumps hit both processes,
and the excesses ``(w - w*)^+`` and ``(w* - w)^+`` drive two independent
streams that hit one process each. When the two measures coincide only the
common stream is active, so identical specs give identical paths.

Reproducibility
---------------
Path ``i`` draws all its noise from its own counter-based stream
(:func:`jumpwass.rng.path_generator`), so results do not depend on block
size or thread count.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .coefficients import Coefficient, JumpMap, coefficient_from_json, jump_map_from_json
from .distances import FMSolverError, fm_discrete, fm_point_masses
from .measures import (
    DEFAULT_EPSILON,
    DiscreteMeasure,
    LevyMeasureSpec,
    check_second_moment,
    discretize,
    levy_from_json,
    pushforward,
    tilt_square,
    union_support,
)
from .rng import STREAM_COUPLED, path_generator

__all__ = [
    "ProcessSpec",
    "GridConfig",
    "SimulationError",
    "CoupledPathSample",
    "CoupledBlock",
    "CoupledRun",
    "MeasureTable",
    "CouplingTables",
    "CharacteristicEvaluator",
    "simulate_coupled",
    "run_coupled",
    "euler_jump_path",
    "characteristics_along_path",
    "write_characteristics_csv",
    "EXPLOSION_THRESHOLD",
    "CSV_COLUMNS",
]

EXPLOSION_THRESHOLD = 1e12
BLOCK_SIZE = 1024
CSV_COLUMNS = ("path_id", "t", "X", "Xstar", "du", "dsig2", "dfm")


class SimulationError(RuntimeError):
    """Raised when a requested single path leaves the finite range."""


@dataclass(frozen=True)
class ProcessSpec:
    """Coefficients ``(u, sigma, g, nu)`` and start value of one jump-diffusion."""

    u: Coefficient = field(default_factory=Coefficient.zero)
    sigma: Coefficient = field(default_factory=Coefficient.zero)
    g: JumpMap = field(default_factory=JumpMap)
    levy: Optional[LevyMeasureSpec] = None
    x0: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")

    @property
    def has_jumps(self) -> bool:
        return self.levy is not None and not self.g.is_zero

    def validate(self, horizon: float) -> None:
        if self.levy is not None:
            self.levy.validate(horizon)
            check_second_moment(self.levy, horizon)

    def measure_at(self, t: float, epsilon: float, n_nodes: int) -> DiscreteMeasure:
        if not self.has_jumps:
            return DiscreteMeasure.empty()
        return discretize(self.levy, t, epsilon, n_nodes)

    @property
    def time_homogeneous_measure(self) -> bool:
        return not self.has_jumps or bool(self.levy.time_homogeneous)

    def to_json(self) -> dict:
        return {
            "u": self.u.to_json(),
            "sigma": self.sigma.to_json(),
            "g": self.g.to_json(),
            "levy": None if self.levy is None else self.levy.to_json(),
            "x0": self.x0,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProcessSpec":
        extra = set(obj) - {"u", "sigma", "g", "levy", "x0"}
        if extra:
            raise ValueError(f"unknown process fields {sorted(extra)}")
        levy = obj.get("levy")
        return cls(
            coefficient_from_json(obj.get("u", {"form": "zero"})),
            coefficient_from_json(obj.get("sigma", {"form": "zero"})),
            jump_map_from_json(obj.get("g", {"form": "zero"})),
            None if levy is None else levy_from_json(levy),
            float(obj.get("x0", 1.0)),
        )


@dataclass(frozen=True)
class GridConfig:
    """Uniform time grid, truncation level and Monte Carlo budget."""

    horizon: float = 1.0
    n_steps: int = 400
    epsilon: float = DEFAULT_EPSILON
    n_paths: int = 100_000
    seed: int = 0
    n_nodes: int = 256

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("n_steps and n_paths must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "GridConfig":
        data = self.to_json()
        data.update(changes)
        return GridConfig(**data)

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_steps": self.n_steps,
            "epsilon": self.epsilon,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "n_nodes": self.n_nodes,
        }


# ---------------------------------------------------------------------------
# Jump tables
# ---------------------------------------------------------------------------


class MeasureTable:
    """Per-row discrete measures padded into arrays for vectorized mark sampling."""

    def __init__(self, measures: Sequence[DiscreteMeasure]):
        self.n_rows = len(measures)
        width = max(1, max((m.size for m in measures), default=1))
        self.locations = np.zeros((self.n_rows, width))
        self.cdf = np.ones((self.n_rows, width))
        self.mass = np.zeros(self.n_rows)
        self.first_moment = np.zeros(self.n_rows)
        for r, m in enumerate(measures):
            if m.size == 0:
                continue
            self.locations[r, : m.size] = m.locations
            self.locations[r, m.size:] = m.locations[-1]
            total = float(m.weights.sum())
            self.mass[r] = total
            self.first_moment[r] = float(np.dot(m.locations, m.weights))
            if total > 0:
                cdf = np.cumsum(m.weights) / total
                cdf[-1] = 1.0
                self.cdf[r, : m.size] = cdf
        self.width = width

    def sample(self, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Marks for uniforms ``u`` drawn from the normalized measure of each row."""
        if u.size == 0:
            return np.empty(0)
        if self.n_rows == 1:
            idx = np.searchsorted(self.cdf[0], u, side="right")
            return self.locations[0, np.minimum(idx, self.width - 1)]
        # Offsetting row r by r keeps the flattened table sorted.
        flat = (self.cdf + np.arange(self.n_rows)[:, None]).ravel()
        idx = np.searchsorted(flat, rows + u, side="right") - rows * self.width
        idx = np.clip(idx, 0, self.width - 1)
        return self.locations[rows, idx]


@dataclass
class CouplingTables:
    """Jump tables for the maximal coupling of two compensators on a grid."""

    rows: np.ndarray  # grid step -> table row
    row_times: np.ndarray
    measures_x: List[DiscreteMeasure]
    measures_xstar: List[DiscreteMeasure]
    streams: List[MeasureTable]  # common, X-only, X*-only

    @classmethod
    def build(cls, spec_x: ProcessSpec, spec_xstar: ProcessSpec, grid: GridConfig) -> "CouplingTables":
        homogeneous = spec_x.time_homogeneous_measure and spec_xstar.time_homogeneous_measure
        row_times = np.array([0.0]) if homogeneous else grid.times[:-1]
        rows = np.zeros(grid.n_steps, dtype=np.int64) if homogeneous else np.arange(grid.n_steps)
        mx, ms, parts = [], [], ([], [], [])
        for t in row_times:
            a = spec_x.measure_at(float(t), grid.epsilon, grid.n_nodes)
            b = spec_xstar.measure_at(float(t), grid.epsilon, grid.n_nodes)
            mx.append(a)
            ms.append(b)
            support, (wa, wb) = union_support(a, b)
            common = np.minimum(wa, wb)
            parts[0].append(DiscreteMeasure(support, common))
            parts[1].append(DiscreteMeasure(support, wa - common))
            parts[2].append(DiscreteMeasure(support, wb - common))
        return cls(rows, row_times, mx, ms, [MeasureTable(p) for p in parts])

    @property
    def first_moment_x(self) -> np.ndarray:
        return self.streams[0].first_moment + self.streams[1].first_moment

    @property
    def first_moment_xstar(self) -> np.ndarray:
        return self.streams[0].first_moment + self.streams[2].first_moment

    def intensities(self, dt: float) -> np.ndarray:
        """Poisson means per (stream, step) for one grid step of length ``dt``."""
        return np.stack([s.mass[self.rows] for s in self.streams]) * dt


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


@dataclass
class _Noise:
    normals: np.ndarray  # (B, n)
    jump_sums: np.ndarray  # (B, S, n) summed marks
    counts: np.ndarray  # (B, S, n)
    cells: Optional[np.ndarray] = None  # flat (path, stream, step) index per jump
    marks: Optional[np.ndarray] = None


def draw_noise(seed: int, stream: int, path_ids: np.ndarray, intensities: np.ndarray,
               tables: Sequence[MeasureTable], rows: np.ndarray, keep_marks: bool = False) -> _Noise:
    """Standard normals and summed jump marks for each path in ``path_ids``.

    Per path, in order: ``n`` standard normals, Poisson counts for every
    ``(stream, step)`` of the streams with positive intensity somewhere on the
    grid, then one uniform per jump.
    """
    n_streams, n = intensities.shape
    b = len(path_ids)
    normals = np.empty((b, n))
    counts = np.zeros((b, n_streams, n), dtype=np.int64)
    uniforms = []
    live = np.flatnonzero((intensities > 0).any(axis=1))
    lam = intensities[live]
    for j, pid in enumerate(path_ids):
        gen = path_generator(seed, int(pid), stream)
        normals[j] = gen.standard_normal(n)
        if live.size:
            c = gen.poisson(lam)
            counts[j, live] = c
            total = int(c.sum())
            if total:
                uniforms.append(gen.random(total))
    sums = np.zeros((b, n_streams, n))
    cells = marks = None
    if uniforms:
        u = np.concatenate(uniforms)
        cells = np.repeat(np.arange(b * n_streams * n), counts.ravel())
        stream_of = (cells // n) % n_streams
        step_of = cells % n
        marks = np.empty_like(u)
        for s, table in enumerate(tables):
            sel = stream_of == s
            if sel.any():
                marks[sel] = table.sample(rows[step_of[sel]], u[sel])
        sums = np.bincount(cells, weights=marks, minlength=b * n_streams * n).reshape(b, n_streams, n)
    if not keep_marks:
        cells = marks = None
    return _Noise(normals, sums, counts, cells, marks)


# ---------------------------------------------------------------------------
# Characteristics
# ---------------------------------------------------------------------------


class CharacteristicEvaluator:
    """Per-node gaps ``|u - u*|``, ``|sigma^2 - sigma*^2|`` and ``d_FM`` of the tilted jump measures.

    Both coefficient sets are evaluated at the state of ``X``. The tilted
    measure of ``X`` at ``(t, x)`` is ``y^2`` times the image of ``nu(t, .)``
    under ``y -> g(t, x, y)``; likewise for ``X*``.

    The Fortet-Mourier term uses a closed form when both measures are single
    atoms, is computed once per time when neither jump map depends on the
    state, and otherwise falls back to one LP per (node, path).
    """

    def __init__(self, spec_x: ProcessSpec, spec_xstar: ProcessSpec, grid: GridConfig,
                 tables: Optional[CouplingTables] = None):
        self.spec_x = spec_x
        self.spec_xstar = spec_xstar
        self.grid = grid
        self.tables = tables or CouplingTables.build(spec_x, spec_xstar, grid)
        mx = self.tables.measures_x
        ms = self.tables.measures_xstar
        self.point_masses = all(m.size <= 1 for m in mx) and all(m.size <= 1 for m in ms)
        self.state_free = spec_x.g.state_independent and spec_xstar.g.state_independent
        self._fm_cache: dict = {}
        self.fm_failures = 0

    @property
    def fm_is_cheap(self) -> bool:
        return self.point_masses or self.state_free

    def tilted(self, step: int, x: float):
        t = float(self.grid.times[step])
        r = int(self.tables.rows[step])
        a = tilt_square(pushforward(self.tables.measures_x[r], self.spec_x.g.at(t, x)))
        b = tilt_square(pushforward(self.tables.measures_xstar[r], self.spec_xstar.g.at(t, x)))
        return a, b

    def drift_gap(self, steps: np.ndarray, x: np.ndarray) -> np.ndarray:
        t = self.grid.times[steps]
        return np.abs(self.spec_x.u(t, x) - self.spec_xstar.u(t, x))

    def diffusion_gap(self, steps: np.ndarray, x: np.ndarray) -> np.ndarray:
        t = self.grid.times[steps]
        return np.abs(self.spec_x.sigma(t, x) ** 2 - self.spec_xstar.sigma(t, x) ** 2)

    def _fm_single(self, step: int, x: float) -> float:
        try:
            a, b = self.tilted(step, x)
            return fm_discrete(a, b)
        except (FMSolverError, ValueError):
            self.fm_failures += 1
            return math.nan

    def fm_gap(self, steps: np.ndarray, x: np.ndarray, allow_lp: bool = True) -> np.ndarray:
        """FM distance per entry; ``nan`` where an LP would be needed but ``allow_lp`` is false."""
        steps, x = np.broadcast_arrays(np.asarray(steps), np.asarray(x, dtype=float))
        out = np.full(x.shape, np.nan)
        if not (self.spec_x.has_jumps or self.spec_xstar.has_jumps):
            return np.zeros(x.shape)
        t = self.grid.times[steps]
        rows = self.tables.rows[steps]
        if self.point_masses:
            def atom(spec, measures):
                loc = np.array([m.locations[0] if m.size else 0.0 for m in measures])[rows]
                rate = np.array([m.weights[0] if m.size else 0.0 for m in measures])[rows]
                if not spec.has_jumps:
                    rate = np.zeros_like(rate)
                size = spec.g.multiplier(t, x) * loc
                return size, rate * size**2

            xa, wa = atom(self.spec_x, self.tables.measures_x)
            xb, wb = atom(self.spec_xstar, self.tables.measures_xstar)
            return np.asarray(fm_point_masses(wa, xa, wb, xb))
        if self.state_free:
            for s in np.unique(steps):
                key = (int(self.tables.rows[s]), float(self.spec_x.g.multiplier(self.grid.times[s], 0.0)),
                       float(self.spec_xstar.g.multiplier(self.grid.times[s], 0.0)))
                if key not in self._fm_cache:
                    self._fm_cache[key] = self._fm_single(int(s), 0.0)
                out[steps == s] = self._fm_cache[key]
            return out
        if allow_lp:
            for idx in np.ndindex(x.shape):
                out[idx] = self._fm_single(int(steps[idx]), float(x[idx]))
        return out

    def evaluate(self, steps, x, allow_lp: bool = True):
        steps = np.asarray(steps)
        x = np.asarray(x, dtype=float)
        return self.drift_gap(steps, x), self.diffusion_gap(steps, x), self.fm_gap(steps, x, allow_lp)


# ---------------------------------------------------------------------------
# Coupled simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledPathSample:
    """One simulated coupled path."""

    path_id: int
    times: np.ndarray
    x_path: np.ndarray
    xstar_path: np.ndarray
    jump_log: tuple = ()  # (t, mark y, target) with target in {"both", "X", "X*"}
    aborted: bool = False

    @property
    def terminal(self) -> tuple:
        return float(self.x_path[-1]), float(self.xstar_path[-1])


@dataclass
class CoupledBlock:
    """Results for a contiguous range of path ids."""

    path_ids: np.ndarray
    x_terminal: np.ndarray
    xstar_terminal: np.ndarray
    aborted: np.ndarray
    abort_step: np.ndarray
    x_nodes: Optional[np.ndarray] = None  # (B, len(node_steps)) states of X at recorded nodes
    xstar_nodes: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None  # (B, 3) per-path integrals of du, dsig2, dfm
    node_chars: Optional[np.ndarray] = None  # (B, len(node_steps), 3)
    x_full: Optional[np.ndarray] = None
    xstar_full: Optional[np.ndarray] = None
    jump_logs: Optional[list] = None
    fm_failures: int = 0

    def samples(self, times: np.ndarray) -> Iterator[CoupledPathSample]:
        if self.x_full is None:
            raise ValueError("block was simulated without full paths (record='full')")
        for j, pid in enumerate(self.path_ids):
            log = tuple(self.jump_logs[j]) if self.jump_logs is not None else ()
            yield CoupledPathSample(int(pid), times, self.x_full[j], self.xstar_full[j], log, bool(self.aborted[j]))


def _node_steps(n_steps: int, count: Optional[int]) -> np.ndarray:
    if count is None or count >= n_steps:
        return np.arange(n_steps)
    return np.unique(np.linspace(0, n_steps - 1, count).round().astype(np.int64))


_TARGETS = ("both", "X", "X*")


def _simulate_block(spec_x, spec_xstar, grid, tables, path_ids, record, node_steps, evaluator,
                    fm_paths, record_jumps):
    n = grid.n_steps
    dt = grid.dt
    sq = math.sqrt(dt)
    times = grid.times
    noise = draw_noise(grid.seed, STREAM_COUPLED, path_ids, tables.intensities(dt), tables.streams,
                       tables.rows, keep_marks=record_jumps)
    b = len(path_ids)
    m1x = tables.first_moment_x[tables.rows] if spec_x.has_jumps else np.zeros(n)
    m1s = tables.first_moment_xstar[tables.rows] if spec_xstar.has_jumps else np.zeros(n)
    js = noise.jump_sums
    jx = js[:, 0, :] + js[:, 1, :] if spec_x.has_jumps else np.zeros((b, n))
    jxs = js[:, 0, :] + js[:, 2, :] if spec_xstar.has_jumps else np.zeros((b, n))
    x = np.full(b, spec_x.x0)
    xs = np.full(b, spec_xstar.x0)
    full = record in ("full", "chars")
    if full:
        xp = np.empty((b, n + 1))
        xsp = np.empty((b, n + 1))
        xp[:, 0] = x
        xsp[:, 0] = xs
    aborted = np.zeros(b, dtype=bool)
    abort_step = np.full(b, -1)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t = times[k]
            dw = sq * noise.normals[:, k]
            x_new = (x + spec_x.u(t, x) * dt + spec_x.sigma(t, x) * dw
                     + spec_x.g.multiplier(t, x) * (jx[:, k] - dt * m1x[k]))
            xs_new = (xs + spec_xstar.u(t, xs) * dt + spec_xstar.sigma(t, xs) * dw
                      + spec_xstar.g.multiplier(t, xs) * (jxs[:, k] - dt * m1s[k]))
            bad = ~(np.isfinite(x_new) & np.isfinite(xs_new)
                    & (np.abs(x_new) <= EXPLOSION_THRESHOLD) & (np.abs(xs_new) <= EXPLOSION_THRESHOLD))
            newly = bad & ~aborted
            if newly.any():
                abort_step[newly] = k + 1
                aborted |= newly
                x_new[aborted] = 0.0
                xs_new[aborted] = 0.0
            x, xs = x_new, xs_new
            if full:
                xp[:, k + 1] = x
                xsp[:, k + 1] = xs
    x_term = np.where(aborted, np.nan, x)
    xs_term = np.where(aborted, np.nan, xs)
    block = CoupledBlock(np.asarray(path_ids), x_term, xs_term, aborted, abort_step)
    if full:
        xp[aborted] = np.nan
        xsp[aborted] = np.nan
        if record == "full":
            block.x_full, block.xstar_full = xp, xsp
        block.x_nodes = xp[:, node_steps]
        block.xstar_nodes = xsp[:, node_steps]
        if evaluator is not None:
            steps = np.arange(n)
            du = evaluator.drift_gap(steps[None, :], xp[:, :-1])
            ds = evaluator.diffusion_gap(steps[None, :], xp[:, :-1])
            if evaluator.fm_is_cheap:
                fm_full = evaluator.fm_gap(steps[None, :], xp[:, :-1])
                fm_int = fm_full.sum(axis=1) * dt
                fm_nodes = fm_full[:, node_steps]
            else:
                lp_rows = np.asarray(path_ids) < fm_paths
                fm_nodes = np.full((b, node_steps.size), np.nan)
                if lp_rows.any():
                    fm_nodes[lp_rows] = evaluator.fm_gap(node_steps[None, :], xp[lp_rows][:, node_steps])
                fm_int = fm_nodes.mean(axis=1) * grid.horizon
                block.fm_failures = int(np.isnan(fm_nodes[lp_rows]).sum())
            block.theta = np.stack([du.sum(axis=1) * dt, ds.sum(axis=1) * dt, fm_int], axis=1)
            block.theta[aborted] = np.nan
            block.node_chars = np.stack([du[:, node_steps], ds[:, node_steps], fm_nodes], axis=2)
    if record_jumps:
        logs: list = [[] for _ in range(b)]
        if noise.cells is not None:
            ns = len(tables.streams)
            for cell, y in zip(noise.cells, noise.marks):
                j, rest = divmod(int(cell), ns * n)
                s, k = divmod(rest, n)
                logs[j].append((float(times[k]), float(y), _TARGETS[s]))
        block.jump_logs = logs
    return block


def simulate_coupled(spec_x: ProcessSpec, spec_xstar: ProcessSpec, grid: GridConfig, *,
                     threads: int = 1, record: str = "terminal", node_count: Optional[int] = 64,
                     fm_paths: int = 256, record_jumps: bool = False,
                     path_ids: Optional[Sequence[int]] = None,
                     block_size: int = BLOCK_SIZE) -> Iterator[CoupledBlock]:
    """Stream :class:`CoupledBlock` results in path order.

    Parameters
    ----------
    record : {"terminal", "nodes", "chars", "full"}
        ``terminal`` keeps only end values; ``nodes`` also keeps states on the
        node subsample; ``chars`` adds per-path characteristic integrals and
        per-node records; ``full`` additionally keeps entire paths.
    node_count : int or None
        Size of the uniform node subsample (``None`` for every grid node).
    fm_paths : int
        When the FM term needs an LP per (node, path), only paths with id
        below this are evaluated; the others carry ``nan``.
    """
    if spec_x.x0 != spec_xstar.x0:
        raise ValueError("coupled processes must start from the same value")
    if record not in ("terminal", "nodes", "chars", "full"):
        raise ValueError(f"unknown record mode {record!r}")
    spec_x.validate(grid.horizon)
    spec_xstar.validate(grid.horizon)
    tables = CouplingTables.build(spec_x, spec_xstar, grid)
    node_steps = _node_steps(grid.n_steps, node_count)
    evaluator = CharacteristicEvaluator(spec_x, spec_xstar, grid, tables) if record in ("chars", "full") else None
    mode = "full" if record == "full" else ("chars" if record in ("chars", "nodes") else "terminal")
    ids = np.arange(grid.n_paths) if path_ids is None else np.asarray(path_ids, dtype=np.int64)
    chunks = [ids[i:i + block_size] for i in range(0, ids.size, block_size)]

    def work(chunk):
        return _simulate_block(spec_x, spec_xstar, grid, tables, chunk, mode, node_steps, evaluator,
                               fm_paths, record_jumps)

    if threads <= 1:
        for chunk in chunks:
            yield work(chunk)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(work, chunks)


@dataclass
class CoupledRun:
    """Collected output of a full coupled simulation."""

    grid: GridConfig
    path_ids: np.ndarray
    x_terminal: np.ndarray
    xstar_terminal: np.ndarray
    aborted: int
    node_steps: np.ndarray
    theta_paths: Optional[np.ndarray] = None  # (n_ok, 3)
    moments: dict = field(default_factory=dict)
    fm_failures: int = 0
    fm_paths_used: int = 0


def run_coupled(spec_x: ProcessSpec, spec_xstar: ProcessSpec, grid: GridConfig, *, threads: int = 1,
                node_count: Optional[int] = 64, fm_paths: int = 256, csv_path=None,
                csv_paths: int = 100) -> CoupledRun:
    """Simulate all paths, integrate characteristics, optionally stream node records to CSV.

    Only the first ``csv_paths`` paths are written to ``csv_path`` (one row
    per recorded node, columns :data:`CSV_COLUMNS`).
    """
    node_steps = _node_steps(grid.n_steps, node_count)
    xs, xss, ab, th, ids = [], [], [], [], []
    handle = writer = None
    if csv_path is not None:
        handle = open(csv_path, "w", newline="")
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
    times = grid.times
    x_abs1 = np.zeros(node_steps.size)
    x_abs2 = np.zeros(node_steps.size)
    x_abs3 = np.zeros(node_steps.size)
    n_ok = 0
    fm_failures = 0
    try:
        gen = simulate_coupled(spec_x, spec_xstar, grid, threads=threads, record="chars",
                               node_count=node_count, fm_paths=fm_paths)
        for block in gen:
            ok = ~block.aborted
            xs.append(block.x_terminal)
            xss.append(block.xstar_terminal)
            ab.append(block.aborted)
            th.append(block.theta)
            ids.append(block.path_ids)
            xn = np.abs(block.x_nodes[ok])
            x_abs1 += xn.sum(axis=0)
            x_abs2 += (xn**2).sum(axis=0)
            x_abs3 += (xn**3).sum(axis=0)
            n_ok += int(ok.sum())
            fm_failures += block.fm_failures
            if writer is not None:
                for j, pid in enumerate(block.path_ids):
                    if pid >= csv_paths:
                        break
                    for q, step in enumerate(node_steps):
                        c = block.node_chars[j, q]
                        writer.writerow([int(pid), repr(float(times[step])), repr(float(block.x_nodes[j, q])),
                                         repr(float(block.xstar_nodes[j, q])), repr(float(c[0])),
                                         repr(float(c[1])), repr(float(c[2]))])
    finally:
        if handle is not None:
            handle.close()
    aborted = np.concatenate(ab)
    theta = np.concatenate(th)[~aborted]
    fm_used = int(np.sum(np.isfinite(theta[:, 2]))) if theta.size else 0
    run = CoupledRun(grid, np.concatenate(ids), np.concatenate(xs)[~aborted], np.concatenate(xss)[~aborted],
                     int(aborted.sum()), node_steps, theta, fm_failures=fm_failures, fm_paths_used=fm_used)
    denom = max(n_ok, 1)
    run.moments = {"E|X|": x_abs1 / denom, "E|X|^2": x_abs2 / denom, "E|X|^3": x_abs3 / denom}
    return run


def euler_jump_path(spec: ProcessSpec, grid: GridConfig, path_index: int) -> np.ndarray:
    """Single Euler path of ``spec`` on the grid (states at all ``n_steps + 1`` nodes).

    Uses the same per-path stream as :func:`simulate_coupled`, so it equals
    the ``X`` component of a coupling of ``spec`` with itself.
    """
    block = next(simulate_coupled(spec, spec, grid, record="full", path_ids=[path_index]))
    if block.aborted[0]:
        raise SimulationError(f"path {path_index} left the finite range at step {int(block.abort_step[0])}")
    return block.x_full[0]


def characteristics_along_path(spec_x: ProcessSpec, spec_xstar: ProcessSpec, grid: GridConfig,
                               path: CoupledPathSample, node_count: Optional[int] = None) -> dict:
    """Per-node ``du``, ``dsig2`` and ``dfm`` evaluated along the ``X`` component of ``path``.

    Returns a dict of equal-length arrays ``t``, ``X``, ``Xstar``, ``du``,
    ``dsig2``, ``dfm`` plus ``fm_failures`` (nodes whose LP failed carry ``nan``).
    """
    ev = CharacteristicEvaluator(spec_x, spec_xstar, grid)
    steps = _node_steps(grid.n_steps, node_count)
    x = path.x_path[steps]
    du, ds, fm = ev.evaluate(steps, x)
    return {"t": grid.times[steps], "X": x, "Xstar": path.xstar_path[steps], "du": du, "dsig2": ds,
            "dfm": fm, "fm_failures": ev.fm_failures}


def write_characteristics_csv(path, records: Sequence[tuple]) -> None:
    """Write ``(path_id, chars_dict)`` pairs to ``path`` using :data:`CSV_COLUMNS`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for pid, rec in records:
            for q in range(len(rec["t"])):
                w.writerow([pid] + [repr(float(rec[c][q])) for c in ("t", "X", "Xstar", "du", "dsig2", "dfm")])
