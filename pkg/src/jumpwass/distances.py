"""One-dimensional distances between samples and finite measures.

* :func:`w1_empirical` -- exact Wasserstein-1 between equal-weight empirical laws.
* :func:`fm_discrete` -- Fortet-Mourier (bounded-Lipschitz) distance between
  finite discrete measures, by linear programming.
* :func:`fm_bruteforce_oracle` -- grid enumeration bracket for ``fm_discrete``.
* :func:`dW3_dictionary_lower_bound` -- lower bound on the smooth Wasserstein
  distance of order 3 from a dictionary of test functions.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.stats import norm

from .measures import DiscreteMeasure, union_support

__all__ = [
    "SampleSet",
    "w1_empirical",
    "ot_lp_oracle",
    "assignment_oracle",
    "fm_discrete",
    "fm_point_masses",
    "fm_bruteforce_oracle",
    "FMOracleResult",
    "FMSolverError",
    "TestFunction",
    "TestFunctionDictionary",
    "default_dictionary",
    "dW3_dictionary_lower_bound",
]

MAX_FM_ATOMS = 10_000


class FMSolverError(RuntimeError):
    """The Fortet-Mourier linear program did not solve to optimality."""


# ---------------------------------------------------------------------------
# Samples and Wasserstein-1
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Sorted finite sample of terminal values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("sample set is empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def resample(self, n: int) -> np.ndarray:
        """``n`` quantiles at levels ``(i + 1/2) / n``, linear between order statistics."""
        if n == self.size:
            return self.values
        levels = (np.arange(n) + 0.5) / n
        return np.quantile(self.values, levels, method="linear")


def _as_samples(x) -> SampleSet:
    return x if isinstance(x, SampleSet) else SampleSet(x)


def w1_empirical(a, b) -> float:
    """Wasserstein-1 distance between two empirical laws on the line.

    For equal sizes this is ``mean |a_(i) - b_(i)|`` over order statistics,
    the exact optimal-transport cost. Unequal sizes are first brought to the
    larger size by quantile resampling (:meth:`SampleSet.resample`).
    """
    a, b = _as_samples(a), _as_samples(b)
    n = max(a.size, b.size)
    return float(np.mean(np.abs(a.resample(n) - b.resample(n))))


def ot_lp_oracle(a: Sequence[float], b: Sequence[float]) -> float:
    """Optimal transport between uniform empirical laws, solved as a dense LP."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :]).ravel()
    rows = []
    for i in range(n):
        r = np.zeros((n, m))
        r[i, :] = 1
        rows.append(r.ravel())
    for j in range(m):
        r = np.zeros((n, m))
        r[:, j] = 1
        rows.append(r.ravel())
    rhs = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = optimize.linprog(cost, A_eq=np.array(rows), b_eq=rhs, bounds=(0, None), method="highs")
    if res.status != 0:
        raise FMSolverError(res.message)
    return float(res.fun)


def assignment_oracle(a: Sequence[float], b: Sequence[float]) -> float:
    """Exhaustive minimum over all permutations (equal sizes, n <= 9)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size or a.size > 9:
        raise ValueError("assignment oracle needs equal sizes n <= 9")
    best = math.inf
    for perm in itertools.permutations(range(b.size)):
        best = min(best, float(np.abs(a - b[list(perm)]).sum()))
    return best / a.size


# ---------------------------------------------------------------------------
# Fortet-Mourier
# ---------------------------------------------------------------------------


def fm_point_masses(m1, x1, m2, x2):
    """Fortet-Mourier distance between ``m1 delta_{x1}`` and ``m2 delta_{x2}`` (vectorized).

    The bounded-Lipschitz LP on two support points is piecewise linear in the
    Lipschitz budget ``l`` with breakpoints ``0``, ``2 / (2 + d)`` and ``1``;
    the optimum is the larger of the two nonzero vertex values.
    """
    m1, x1, m2, x2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m1, x1, m2, x2)))
    d = np.abs(x1 - x2)
    gap = np.abs(m1 - m2)
    common = np.minimum(m1, m2)
    bent = (d * gap + 2.0 * d * common) / (2.0 + d)
    out = np.maximum(gap, bent)
    same = d <= 1e-12 * np.maximum(np.abs(x1), np.abs(x2))
    out = np.where(same, gap, out)
    return out if out.ndim else float(out)


def _fm_lp(support: np.ndarray, diff: np.ndarray) -> float:
    m = support.size
    n_var = m + 2
    s_col, l_col = m, m + 1
    delta = np.diff(support)
    ones = np.ones(m)
    idx = np.arange(m)
    # |h_i| <= s
    r1 = sparse.csr_matrix((np.concatenate([ones, -ones]), (np.concatenate([idx, idx]), np.concatenate([idx, np.full(m, s_col)]))), shape=(m, n_var))
    r2 = sparse.csr_matrix((np.concatenate([-ones, -ones]), (np.concatenate([idx, idx]), np.concatenate([idx, np.full(m, s_col)]))), shape=(m, n_var))
    blocks = [r1, r2]
    if m > 1:
        k = np.arange(m - 1)
        one = np.ones(m - 1)
        rows = np.concatenate([k, k, k])
        # h_{i+1} - h_i - delta_i l <= 0 and its mirror
        up = sparse.csr_matrix((np.concatenate([one, -one, -delta]), (rows, np.concatenate([k + 1, k, np.full(m - 1, l_col)]))), shape=(m - 1, n_var))
        dn = sparse.csr_matrix((np.concatenate([-one, one, -delta]), (rows, np.concatenate([k + 1, k, np.full(m - 1, l_col)]))), shape=(m - 1, n_var))
        blocks += [up, dn]
    budget = sparse.csr_matrix(([1.0, 1.0], ([0, 0], [s_col, l_col])), shape=(1, n_var))
    blocks.append(budget)
    a_ub = sparse.vstack(blocks, format="csr")
    b_ub = np.zeros(a_ub.shape[0])
    b_ub[-1] = 1.0
    c = np.zeros(n_var)
    c[:m] = -diff
    bounds = [(None, None)] * m + [(0, None), (0, None)]
    res = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise FMSolverError(f"Fortet-Mourier LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def fm_discrete(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Fortet-Mourier distance ``sup { int h d(m1 - m2) : ||h||_L + ||h||_inf <= 1 }``.

    Solved exactly as a linear program over the union support; on a sorted
    one-dimensional support the Lipschitz constraint only needs adjacent
    pairs. Masses need not be equal.
    """
    support, (w1, w2) = union_support(m1, m2)
    diff = w1 - w2
    if support.size == 0 or not np.any(diff):
        return 0.0
    if support.size > MAX_FM_ATOMS:
        raise ValueError(f"union support has {support.size} atoms (cap {MAX_FM_ATOMS})")
    if support.size == 1:
        return float(abs(diff[0]))
    if support.size == 2:
        d1, d2 = diff
        if d1 * d2 >= 0:
            return float(abs(d1) + abs(d2))
        pos, neg = (d1, -d2) if d1 > 0 else (d2, -d1)
        return float(fm_point_masses(pos, support[0], neg, support[1]))
    return _fm_lp(support, diff)


@dataclass(frozen=True)
class FMOracleResult:
    """Bracket ``lower <= FM <= upper`` from grid enumeration."""

    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _viterbi_max(diff, delta, levels, jump, lip, slack):
    # best[j] = best partial objective with h_i = levels[j]
    best = diff[0] * levels
    for i in range(1, diff.size):
        ok = jump <= lip * delta[i - 1] + slack
        cand = np.where(ok, best[:, None], -np.inf).max(axis=0)
        best = cand + diff[i] * levels
    return best.max()


def fm_bruteforce_oracle(m1: DiscreteMeasure, m2: DiscreteMeasure, grid_resolution: int = 101,
                         lipschitz_levels: int = 161, max_width: Optional[float] = None) -> FMOracleResult:
    """Enumerate test functions on a value grid, filtering the BL constraint explicitly.

    For each Lipschitz budget ``l_k`` on a uniform grid of ``[0, 1]``, ``h`` takes
    values in ``grid_resolution`` evenly spaced levels of ``[-s, s]`` with
    ``s = 1 - l_k``. The strict filter (``|h_{i+1} - h_i| <= l_k dx_i``) yields
    feasible test functions, hence ``lower``. A relaxed filter (budget
    ``l_{k+1}`` plus one value step) admits the grid rounding of every
    feasible function, which together with the rounding loss gives ``upper``.
    Independent of the LP route by construction. Supports of at most 20 atoms.
    """
    support, (w1, w2) = union_support(m1, m2)
    diff = w1 - w2
    if support.size > 20:
        raise ValueError("brute-force oracle is limited to 20 support points")
    if support.size == 0 or not np.any(diff):
        return FMOracleResult(0.0, 0.0)
    delta = np.diff(support)
    ls = np.linspace(0.0, 1.0, lipschitz_levels)
    unit = np.linspace(-1.0, 1.0, grid_resolution)
    unit_jump = np.abs(unit[:, None] - unit[None, :])
    lower = 0.0
    upper = 0.0
    l1 = float(np.abs(diff).sum())
    for k, lip in enumerate(ls):
        s = 1.0 - lip
        levels = s * unit
        step = 2.0 * s / (grid_resolution - 1)
        jump = s * unit_jump
        lower = max(lower, _viterbi_max(diff, delta, levels, jump, lip, 1e-12 * (1 + lip)))
        lip_hi = ls[min(k + 1, ls.size - 1)]
        relaxed = _viterbi_max(diff, delta, levels, jump, lip_hi, step + 1e-12)
        upper = max(upper, relaxed + 0.5 * step * l1)
    result = FMOracleResult(float(lower), float(upper))
    if max_width is not None and result.width > max_width:
        raise ValueError(f"grid too coarse to certify: bracket width {result.width:.3g} > {max_width:.3g}")
    return result


# ---------------------------------------------------------------------------
# Smooth test-function dictionary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Test function with analytic derivatives up to order 3."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    derivatives: tuple  # (h, h', h'', h''')

    def __call__(self, x):
        return self.derivatives[0](np.asarray(x, dtype=float))

    def derivative(self, x, order: int):
        return self.derivatives[order](np.asarray(x, dtype=float))


def sinusoid(omega: float, phase: float) -> TestFunction:
    amp = 1.0 / max(1.0, omega**3)
    return TestFunction(
        f"sin({omega:g}x+{phase:.3g})",
        (
            lambda x: amp * np.sin(omega * x + phase),
            lambda x: amp * omega * np.cos(omega * x + phase),
            lambda x: -amp * omega**2 * np.sin(omega * x + phase),
            lambda x: -amp * omega**3 * np.cos(omega * x + phase),
        ),
    )


def smoothed_ramp(half_width: float, smoothing: float, shift: float = 0.0) -> TestFunction:
    """``clip(x - shift, -b, b)`` convolved with a centred Gaussian of standard deviation ``smoothing``."""
    b, s = half_width, smoothing

    def parts(x):
        a1 = (x - shift - b) / s
        a2 = (x - shift + b) / s
        return a1, a2

    def f(x):
        a1, a2 = parts(x)
        y = x - shift
        upper = (y - b) * norm.cdf(a1) + s * norm.pdf(a1)
        lower = (-b - y) * norm.cdf(-a2) + s * norm.pdf(a2)
        return y - upper + lower

    def d1(x):
        a1, a2 = parts(x)
        return norm.cdf(a2) - norm.cdf(a1)

    def d2(x):
        a1, a2 = parts(x)
        return (norm.pdf(a2) - norm.pdf(a1)) / s

    def d3(x):
        a1, a2 = parts(x)
        return (a1 * norm.pdf(a1) - a2 * norm.pdf(a2)) / s**2

    return TestFunction(f"ramp(b={b:g},s={s:g},c={shift:g})", (f, d1, d2, d3))


def gaussian_bump(center: float, width: float) -> TestFunction:
    def g(x):
        return np.exp(-0.5 * ((x - center) / width) ** 2)

    def d1(x):
        z = (x - center) / width
        return -z / width * g(x)

    def d2(x):
        z = (x - center) / width
        return (z * z - 1) / width**2 * g(x)

    def d3(x):
        z = (x - center) / width
        return (3 * z - z**3) / width**3 * g(x)

    return TestFunction(f"bump({center:g},{width:g})", (g, d1, d2, d3))


class TestFunctionDictionary:
    """Finite family of functions in the smooth class ``H_3``.

    Every member is checked at construction: ``|h^(k)| <= 1`` for ``k = 0..3``
    on a dense grid of ``[-grid_radius, grid_radius]``.
    """

    __test__ = False

    def __init__(self, functions: Iterable[TestFunction], grid_radius: float = 20.0, grid_step: float = 1e-3):
        self.functions = list(functions)
        if not self.functions:
            raise ValueError("dictionary must not be empty")
        grid = np.arange(-grid_radius, grid_radius + grid_step / 2, grid_step)
        for fn in self.functions:
            for k in range(4):
                peak = float(np.max(np.abs(fn.derivative(grid, k))))
                if peak > 1.0 + 1e-12:
                    raise ValueError(f"{fn.name}: |h^({k})| reaches {peak:.6g} > 1, not in H_3")

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)


@functools.lru_cache(maxsize=1)
def default_dictionary() -> TestFunctionDictionary:
    """Sixteen ``H_3`` functions: eight sinusoids, four smoothed ramps, four Gaussian bumps."""
    fns = [sinusoid(w, p) for w in (0.25, 0.5, 1.0, 2.0) for p in (0.0, math.pi / 2)]
    fns += [
        smoothed_ramp(1.0, 0.7, 0.0),
        smoothed_ramp(1.0, 0.7, 1.0),
        smoothed_ramp(0.5, 0.7, -1.0),
        smoothed_ramp(1.0, 1.0, 2.0),
    ]
    fns += [gaussian_bump(c, 1.2) for c in (-1.0, 0.0, 1.0, 2.0)]
    return TestFunctionDictionary(fns)


def dW3_dictionary_lower_bound(a, b, dictionary: Optional[TestFunctionDictionary] = None) -> float:
    """``max_h |mean h(a) - mean h(b)|`` over the dictionary; a lower bound on ``d_W3``."""
    dictionary = dictionary or default_dictionary()
    a = np.asarray(a.values if isinstance(a, SampleSet) else a, dtype=float)
    b = np.asarray(b.values if isinstance(b, SampleSet) else b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("sample set is empty")
    return float(max(abs(np.mean(fn(a)) - np.mean(fn(b))) for fn in dictionary))
