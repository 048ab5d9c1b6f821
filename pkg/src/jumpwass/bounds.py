"""Explicit distance bounds between the laws of ``X_T`` and ``X*_T``.

All bounds are functions of the characteristic gaps

    theta_u     = E int_0^T |u - u*|(t, X_t) dt
    theta_sigma = E int_0^T |sigma^2 - sigma*^2|(t, X_t) dt
    theta_nu    = E int_0^T d_FM(tilde nu_t, tilde nu*(t, X_t)) dt

and of the flow constants in :class:`~jumpwass.flow.ConstantSet`.

* :func:`smooth_w3_rhs` -- smooth Wasserstein bound ``C * Theta``.
* :func:`prop32_rhs` -- Wasserstein bound from the aggregate ``Theta``.
* :func:`f_evaluate` -- Wasserstein bound ``F(theta_u, theta_sigma, theta_nu)``.
* :func:`cardan_minimize` -- closed-form minimization of
  ``G(alpha) = D0 sqrt(alpha) + D1 + D2 / sqrt(alpha) + D3 / alpha``.
* :func:`prop41_bound` -- three-term bound on the FM distance of tilted jump measures.
* :func:`generator_apply`, :func:`generator_gap_check` -- generator identity cross-check.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .coefficients import JumpMap
from .distances import SampleSet, dW3_dictionary_lower_bound, w1_empirical
from .flow import ConstantSet, flow_recursion, single_tables
from .measures import DiscreteMeasure, MeasureError, discretize, union_support
from .rng import STREAM_COUPLED, STREAM_INNER, STREAM_OUTER, path_generator
from .simulate import GridConfig, ProcessSpec, simulate_coupled

__all__ = [
    "CardanProblem",
    "CardanResult",
    "ThetaReport",
    "BoundReport",
    "cardan_minimize",
    "cardan_G",
    "min3b",
    "smooth_w3_constant",
    "smooth_w3_rhs",
    "f_coefficients",
    "f_evaluate",
    "prop32_coefficients",
    "prop32_rhs",
    "prop41_bound",
    "generator_apply",
    "generator_gap_check",
    "GapCheckResult",
    "theta_from_run",
    "evaluate_bounds",
    "D0",
    "DEFAULT_K",
]

D0 = 2.0 * math.sqrt(2.0 / math.pi)
DEFAULT_K = 10.0
GOLDEN_BRACKET = (1e-12, 1e12)


# ---------------------------------------------------------------------------
# Cardan minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CardanProblem:
    """Coefficients of ``G(alpha) = D0 sqrt(alpha) + D1 + D2 / sqrt(alpha) + D3 / alpha``."""

    D0: float
    D1: float
    D2: float
    D3: float

    def __post_init__(self):
        for name in ("D0", "D1", "D2", "D3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def degenerate(self) -> bool:
        """True when one of ``D0``, ``D2``, ``D3`` vanishes (``D1`` is only an offset)."""
        return self.D0 == 0 or self.D2 == 0 or self.D3 == 0

    def G(self, alpha):
        return cardan_G(self, alpha)


@dataclass(frozen=True)
class CardanResult:
    alpha_star: float
    min_value: float
    upper_bound_min3b: float
    case_tag: str  # "a", "b" or "degenerate"


def cardan_G(p: CardanProblem, alpha):
    alpha = np.asarray(alpha, dtype=float)
    s = np.sqrt(alpha)
    out = p.D0 * s + p.D1 + p.D2 / s + p.D3 / alpha
    return out if out.ndim else float(out)


def min3b(D0: float, D1: float, D2: float, D3: float) -> float:
    """Explicit upper bound ``D1 + 2 sqrt(D0 D2) (r ^ 27)^(1/6) + 3 (D0 D3 / D2) (r ^ 27)^(1/3)``,
    ``r = D2^3 / (D0 D3^2)``, ``^`` the minimum.

    Written so that it stays finite when ``D2`` or ``D3`` vanish: for ``r <= 27``
    it equals ``D1 + 2 D2 (D0/D3)^(1/3) + 3 (D0^2 D3)^(1/3)``, and ``D3 = 0``
    is the ``r = infinity`` limit ``D1 + 2 sqrt(3 D0 D2)``.
    """
    if min(D0, D1, D2, D3) < 0:
        raise ValueError("coefficients must be nonnegative")
    if D3 == 0:
        return D1 + 2.0 * math.sqrt(D0 * D2) * 27.0 ** (1 / 6)
    if D0 == 0:
        return D1
    # compare D2^3 <= 27 D0 D3^2 without forming the ratio
    if D2 == 0 or 3.0 * math.log(D2) <= math.log(27.0 * D0) + 2.0 * math.log(D3):
        # cube roots taken separately: D0 / D3 overflows for subnormal D3
        return float(D1 + 2.0 * D2 * (np.cbrt(D0) / np.cbrt(D3)) + 3.0 * np.cbrt(D0) ** 2 * np.cbrt(D3))
    return D1 + 2.0 * math.sqrt(D0 * D2) * 27.0 ** (1 / 6) + 3.0 * (D0 * D3 / D2) * 27.0 ** (1 / 3)


def _golden(p: CardanProblem):
    lo, hi = (math.log(v) for v in GOLDEN_BRACKET)
    res = optimize.minimize_scalar(lambda s: cardan_G(p, math.exp(s)), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10, "maxiter": 2000})
    alpha = math.exp(res.x)
    value = cardan_G(p, alpha)
    # endpoints of the bracket are candidates too (monotone G)
    for a in GOLDEN_BRACKET:
        g = cardan_G(p, a)
        if g < value:
            alpha, value = a, g
    return alpha, value


def cardan_minimize(p: Union[CardanProblem, Sequence[float]]) -> CardanResult:
    """Minimize ``G`` over ``alpha > 0``.

    With ``beta = sqrt(alpha)`` the stationarity condition is the cubic
    ``D0 beta^3 - D2 beta - 2 D3 = 0``. If ``D2^3 <= 27 D0 D3^2`` it has one
    positive root, given by Cardan's formula (case ``"a"``); otherwise the
    positive root is the largest of three real roots, given by the
    trigonometric form (case ``"b"``). When ``D0``, ``D2`` or ``D3`` is zero the
    minimum is found by bounded golden-section/parabolic search in
    ``log alpha`` over ``[1e-12, 1e12]`` (case ``"degenerate"``).
    """
    if not isinstance(p, CardanProblem):
        p = CardanProblem(*p)
    bound = min3b(p.D0, p.D1, p.D2, p.D3)
    if p.degenerate:
        alpha, value = _golden(p)
        return CardanResult(alpha, value, bound, "degenerate")
    # r = D2^3 / (27 D0 D3^2), evaluated in logs to avoid overflow
    log_r = 3 * math.log(p.D2) - math.log(27 * p.D0) - 2 * math.log(p.D3)
    if log_r <= 0:
        r = math.exp(log_r)
        root = math.sqrt(max(0.0, 1.0 - r))
        beta = float(np.cbrt(p.D3 / p.D0) * (np.cbrt(1.0 - root) + np.cbrt(1.0 + root)))
        tag = "a"
    else:
        ratio = math.exp(-0.5 * log_r)  # sqrt(27 D3^2 D0 / D2^3) < 1
        beta = 2.0 * math.sqrt(p.D2 / (3 * p.D0)) * math.cos(math.acos(ratio) / 3.0)
        tag = "b"
    # one Newton polish on the cubic for the last few ulps
    f = p.D0 * beta**3 - p.D2 * beta - 2 * p.D3
    fp = 3 * p.D0 * beta**2 - p.D2
    if fp > 0:
        beta = beta - f / fp
    alpha = float(beta * beta)
    return CardanResult(alpha, cardan_G(p, alpha), bound, tag)


# ---------------------------------------------------------------------------
# Bound formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaReport:
    """Characteristic gaps with standard errors; ``Theta`` is their sum."""

    theta_u: float
    theta_sigma: float
    theta_nu: float
    se_u: float = 0.0
    se_sigma: float = 0.0
    se_nu: float = 0.0
    n_paths: int = 0
    n_paths_nu: int = 0

    def __post_init__(self):
        for name in ("theta_u", "theta_sigma", "theta_nu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def Theta(self) -> float:
        return self.theta_u + self.theta_sigma + self.theta_nu

    def to_json(self) -> dict:
        out = asdict(self)
        out["Theta"] = self.Theta
        return out


def smooth_w3_constant(c: ConstantSet) -> float:
    """``max(sqrt(A2), (A1 + A2)/2, (A1 + B1/3 + A2 + B2 + B3/3)/2)``."""
    return max(math.sqrt(c.A2), (c.A1 + c.A2) / 2, (c.A1 + c.B1 / 3 + c.A2 + c.B2 + c.B3 / 3) / 2)


def smooth_w3_rhs(theta: ThetaReport, c: ConstantSet) -> float:
    """Smooth Wasserstein (order 3) bound ``C * Theta``."""
    return smooth_w3_constant(c) * theta.Theta


def prop32_coefficients(theta: ThetaReport, c: ConstantSet) -> tuple:
    big = theta.Theta
    d1 = c.C1 / 2 * (c.A1 + 2 * math.sqrt(c.A2) + c.B1 / 3) * big
    d2 = c.C2 / 2 * (c.A2 + c.B2) * big
    d3 = c.C3 * c.B3 / 6 * big
    return D0, d1, d2, d3


def prop32_rhs(theta: ThetaReport, c: ConstantSet) -> float:
    """Wasserstein bound from the aggregate ``Theta`` (explicit Cardan upper bound)."""
    if theta.Theta == 0:
        return 0.0
    return min3b(*prop32_coefficients(theta, c))


def f_coefficients(theta_u: float, theta_sigma: float, theta_nu: float, c: ConstantSet,
                   d1_form: str = "derived") -> tuple:
    """``(D0, D1', D2', D3')`` of the refined bound.

    ``d1_form="derived"`` groups the first-order terms by the gap they
    multiply: ``sqrt(A2)`` per unit ``theta_u``, ``A1/2`` per unit
    ``theta_sigma`` and ``(A1 + B1/3)/2`` per unit ``theta_nu``.
    ``d1_form="printed"`` uses ``2 sqrt(A2) theta_u + (A1 + B3/3) theta_sigma + A1 theta_nu``
    inside the ``C1/2`` bracket instead.
    """
    if d1_form == "derived":
        d1 = c.C1 / 2 * (2 * math.sqrt(c.A2) * theta_u + c.A1 * theta_sigma + (c.A1 + c.B1 / 3) * theta_nu)
    elif d1_form == "printed":
        d1 = c.C1 / 2 * (2 * math.sqrt(c.A2) * theta_u + (c.A1 + c.B3 / 3) * theta_sigma + c.A1 * theta_nu)
    else:
        raise ValueError("d1_form must be 'derived' or 'printed'")
    d2 = c.C2 / 2 * (c.A2 * theta_sigma + (c.A2 + c.B2) * theta_nu)
    d3 = c.C3 * c.B3 / 6 * theta_nu
    return D0, d1, d2, d3


def f_evaluate(theta_u: float, theta_sigma: float, theta_nu: float, c: ConstantSet,
               d1_form: str = "derived") -> float:
    """``F(theta_u, theta_sigma, theta_nu)``: the explicit Cardan bound on ``min_alpha G``."""
    for v in (theta_u, theta_sigma, theta_nu):
        if not (v >= 0 and math.isfinite(v)):
            raise ValueError("theta components must be finite and nonnegative")
    if theta_u == theta_sigma == theta_nu == 0:
        return 0.0
    return min3b(*f_coefficients(theta_u, theta_sigma, theta_nu, c, d1_form))


def _as_map(g, t: float, x: float) -> Callable:
    if isinstance(g, JumpMap):
        return g.at(t, x)
    return g


def prop41_bound(g, g_star, nu: DiscreteMeasure, nu_star: DiscreteMeasure, x: float = 0.0,
                 t: float = 0.0) -> float:
    """``int |g^2 - g*^2| dnu + int g*^2 |g - g*| dnu* + int g*^2 d|nu - nu*|``.

    ``g`` and ``g_star`` are either callables ``y -> jump size`` (already fixed
    at ``(t, x)``) or :class:`~jumpwass.coefficients.JumpMap` objects
    evaluated at ``(t, x)``.
    """
    g = _as_map(g, t, x)
    gs = _as_map(g_star, t, x)
    support, (w, ws) = union_support(nu, nu_star)
    if support.size == 0:
        return 0.0
    a = np.asarray(g(support), dtype=float)
    b = np.asarray(gs(support), dtype=float)
    term1 = np.sum(np.abs(a * a - b * b) * w)
    term2 = np.sum(b * b * np.abs(a - b) * ws)
    term3 = np.sum(b * b * np.abs(w - ws))
    return float(term1 + term2 + term3)


def generator_apply(spec: ProcessSpec, f, t: float, x, epsilon: float = 1e-3, n_nodes: int = 256):
    """``u f' + sigma^2 f''/2 + int (f(x + g) - f(x) - g f'(x)) nu(t, dy)`` at ``(t, x)``.

    ``f`` provides ``f.derivative(x, k)`` for ``k = 0, 1, 2``. The jump integral
    runs over the discretized compensator (jumps below ``epsilon`` omitted).
    """
    x = np.asarray(x, dtype=float)
    out = spec.u(t, x) * f.derivative(x, 1) + 0.5 * spec.sigma(t, x) ** 2 * f.derivative(x, 2)
    if spec.has_jumps:
        try:
            m = discretize(spec.levy, t, epsilon, n_nodes)
        except MeasureError as exc:
            raise ValueError(f"jump integral failed: {exc}") from exc
        if m.size:
            mult = np.asarray(spec.g.multiplier(t, x))
            g = mult[..., None] * m.locations
            xb = x[..., None]
            incr = f.derivative(xb + g, 0) - f.derivative(xb, 0) - g * f.derivative(xb, 1)
            out = out + np.sum(incr * m.weights, axis=-1)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Generator-gap identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapCheckResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    gap: float
    std_err: float
    z: float
    verdict: str  # "pass", "fail" or "inconclusive"
    n_outer: int
    n_inner: int

    def to_json(self) -> dict:
        return asdict(self)


def _partial_path(spec: ProcessSpec, grid: GridConfig, tau: float, normals: np.ndarray, gen) -> float:
    """Euler path of ``spec`` from 0 to ``tau`` on the grid, ending with a partial step."""
    dt = grid.dt
    k_full = min(int(tau // dt), grid.n_steps - 1)
    rest = tau - k_full * dt
    steps = [dt] * k_full + ([rest] if rest > 0 else [])
    x = spec.x0
    for k, h in enumerate(steps):
        t = k * dt
        incr = spec.u(t, x) * h + spec.sigma(t, x) * math.sqrt(h) * normals[k]
        if spec.has_jumps:
            m = spec.measure_at(t, grid.epsilon, grid.n_nodes)
            mass = m.total_mass
            if mass > 0:
                n_jumps = gen.poisson(mass * h)
                marks = 0.0
                if n_jumps:
                    idx = np.searchsorted(np.cumsum(m.weights) / mass, gen.random(n_jumps), side="right")
                    marks = float(m.locations[np.minimum(idx, m.size - 1)].sum())
                first = float(np.dot(m.locations, m.weights))
                incr += spec.g.multiplier(t, x) * (marks - h * first)
        x = x + incr
    return float(x)


def _inner_gap(spec_x, spec_xs, h, grid, tau, x, seed, index, n_inner, inner_dt, max_atoms):
    """``(L* - L) v*(tau, x)`` by Monte Carlo over ``n_inner`` flows of ``X*`` from ``tau``."""
    horizon = grid.horizon
    m = max(1, math.ceil((horizon - tau) / inner_dt - 1e-9))
    step = (horizon - tau) / m
    times = tau + step * np.arange(m)
    table, rows, m1 = single_tables(spec_xs, times, grid.epsilon, grid.n_nodes)
    gen = path_generator(seed, index, STREAM_INNER)
    normals = gen.standard_normal((n_inner, m))
    jumps = np.zeros((n_inner, m))
    if spec_xs.has_jumps:
        lam = table.mass[rows] * step
        counts = gen.poisson(np.broadcast_to(lam, (n_inner, m)))
        total = int(counts.sum())
        if total:
            cells = np.repeat(np.arange(n_inner * m), counts.ravel())
            marks = table.sample(rows[cells % m], gen.random(total))
            jumps = np.bincount(cells, weights=marks, minlength=n_inner * m).reshape(n_inner, m)
    dw = math.sqrt(step) * normals
    starts = [x]
    atoms = {}
    for name, spec in (("x", spec_x), ("xs", spec_xs)):
        if spec.has_jumps:
            meas = spec.measure_at(tau, grid.epsilon, grid.n_nodes)
            if meas.size > max_atoms:
                raise ValueError(f"jump measure has {meas.size} atoms; the nested check supports at most {max_atoms}")
            sizes = spec.g(tau, x, meas.locations)
            atoms[name] = (np.atleast_1d(sizes), meas.weights)
            starts.extend(list(x + np.atleast_1d(sizes)))
    x0s = np.repeat(np.asarray(starts, dtype=float), n_inner)
    tile = len(starts)
    term = flow_recursion(spec_xs, times, step, x0s, np.tile(dw, (tile, 1)), np.tile(jumps, (tile, 1)), m1,
                          order=2, keep="terminal")
    xt = term.x.reshape(tile, n_inner)
    base_h1 = h.derivative(xt[0], 1)
    dv1 = base_h1 * term.y1[:n_inner]
    dv2 = base_h1 * term.y2[:n_inner] + h.derivative(xt[0], 2) * term.y1[:n_inner] ** 2
    v_all = h.derivative(xt, 0)
    # per-inner-path integrand so the inner average is a single mean
    vals = (spec_xs.u(tau, x) - spec_x.u(tau, x)) * dv1 \
        + 0.5 * (spec_xs.sigma(tau, x) ** 2 - spec_x.sigma(tau, x) ** 2) * dv2
    pos = 1
    for name, sign in (("x", -1.0), ("xs", 1.0)):
        if name in atoms:
            sizes, weights = atoms[name]
            k = sizes.size
            jump_part = v_all[pos:pos + k] - v_all[0][None, :] - sizes[:, None] * dv1[None, :]
            vals = vals + sign * np.sum(weights[:, None] * jump_part, axis=0)
            pos += k
    return float(np.mean(vals))


def generator_gap_check(spec_x: ProcessSpec, spec_xs: ProcessSpec, h, grid: GridConfig, n_outer: int,
                        n_inner: int, inner_steps: Optional[int] = None, z_crit: float = 4.0,
                        max_atoms: int = 16) -> GapCheckResult:
    """Nested Monte Carlo check of ``E h(X*_T) - E h(X_T) = E int_0^T (L* v* - L v*)(t, X_t) dt``.

    Outer path ``i``: the coupled pair gives ``lhs_i = h(X*_T) - h(X_T)``; an
    independent uniform time ``tau_i`` and the ``X`` path up to ``tau_i``
    (same Brownian normals, final partial step) give
    ``rhs_i = T (L* v* - L v*)(tau_i, X_tau_i)``, where the derivatives and
    jump increments of ``v*`` come from ``n_inner`` common-random-number flows
    of ``X*``. The identity holds when ``mean(lhs_i - rhs_i)`` is within
    ``z_crit`` standard errors of zero.

    Verdict ``inconclusive`` is returned when the budget is too small
    (``n_outer < 100`` or ``n_inner < 2``) or the standard error exceeds half
    the larger of ``|lhs|`` and ``|rhs|``.
    """
    grid = grid.replace(n_paths=n_outer)
    inner_dt = grid.horizon / (inner_steps or grid.n_steps)
    lhs = np.concatenate([
        h.derivative(b.xstar_terminal, 0) - h.derivative(b.x_terminal, 0)
        for b in simulate_coupled(spec_x, spec_xs, grid)
    ])
    rhs = np.empty(n_outer)
    for i in range(n_outer):
        normals = path_generator(grid.seed, i, STREAM_COUPLED).standard_normal(grid.n_steps)
        gen = path_generator(grid.seed, i, STREAM_OUTER)
        tau = float(gen.uniform(0.0, grid.horizon))
        x_tau = _partial_path(spec_x, grid, tau, normals, gen)
        rhs[i] = grid.horizon * _inner_gap(spec_x, spec_xs, h, grid, tau, x_tau, grid.seed, i, n_inner,
                                           inner_dt, max_atoms)
    ok = np.isfinite(lhs) & np.isfinite(rhs)
    lhs, rhs = lhs[ok], rhs[ok]
    n = lhs.size
    diff = lhs - rhs

    def se(v):
        return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf

    gap, gap_se = float(diff.mean()), se(diff)
    lhs_m, rhs_m = float(lhs.mean()), float(rhs.mean())
    scale = max(abs(lhs_m), abs(rhs_m))
    z = abs(gap) / gap_se if gap_se > 0 else (0.0 if gap == 0 else math.inf)
    if n < 100 or n_inner < 2 or (gap_se > 0 and gap_se > 0.5 * scale):
        verdict = "inconclusive"
    else:
        verdict = "pass" if z <= z_crit else "fail"
    return GapCheckResult(lhs_m, se(lhs), rhs_m, se(rhs), gap, gap_se, z, verdict, n, n_inner)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def theta_from_run(run) -> ThetaReport:
    """Monte Carlo means and standard errors of the characteristic integrals of a :class:`CoupledRun`."""
    th = run.theta_paths
    vals, ses, counts = [], [], []
    for j in range(3):
        col = th[:, j]
        col = col[np.isfinite(col)]
        counts.append(col.size)
        if col.size == 0:
            raise ValueError("no finite characteristic integrals in run")
        vals.append(max(0.0, float(col.mean())))
        ses.append(float(col.std(ddof=1) / math.sqrt(col.size)) if col.size > 1 else 0.0)
    return ThetaReport(vals[0], vals[1], vals[2], ses[0], ses[1], ses[2], counts[0], counts[2])


def _verdict(lhs: float, rhs: float, noise: float) -> str:
    if not math.isfinite(rhs):
        return "inconclusive"
    if lhs <= rhs:
        return "pass"
    if lhs - 3.0 * noise <= rhs:
        return "inconclusive"
    return "violated"


@dataclass
class BoundReport:
    """Bound values, empirical distances and verdicts for one coupled scenario."""

    theta: ThetaReport
    constants: ConstantSet
    rhs_thm31: float
    rhs_prop32: float
    rhs_thm33: float
    rhs_thm33_printed: float
    prop41_mean: Optional[float]
    lhs_w1: float
    lhs_dW3_lower: float
    lhs_noise: float
    verdicts: dict
    ratios: dict
    theta_within_K: bool
    K: float
    metadata: dict = field(default_factory=dict)

    @property
    def violated(self) -> bool:
        return any(v == "violated" for v in self.verdicts.values())

    def recompute_verdicts(self) -> dict:
        return {
            "thm31": _verdict(self.lhs_dW3_lower, self.rhs_thm31, self.lhs_noise),
            "prop32": _verdict(self.lhs_w1, self.rhs_prop32, self.lhs_noise),
            "thm33": _verdict(self.lhs_w1, self.rhs_thm33, self.lhs_noise),
        }

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("theta", "constants")}
        out["theta"] = self.theta.to_json()
        out["constants"] = self.constants.to_json()
        out["certified"] = False
        out["note"] = "inequalities verified under Monte Carlo estimated flow constants"
        return out

    CSV_FIELDS = ("theta_u", "theta_sigma", "theta_nu", "Theta", "rhs_thm31", "rhs_prop32", "rhs_thm33",
                  "lhs_w1", "lhs_dW3_lower", "verdict_thm31", "verdict_prop32", "verdict_thm33")

    def csv_row(self) -> dict:
        return {
            "theta_u": self.theta.theta_u, "theta_sigma": self.theta.theta_sigma,
            "theta_nu": self.theta.theta_nu, "Theta": self.theta.Theta,
            "rhs_thm31": self.rhs_thm31, "rhs_prop32": self.rhs_prop32, "rhs_thm33": self.rhs_thm33,
            "lhs_w1": self.lhs_w1, "lhs_dW3_lower": self.lhs_dW3_lower,
            "verdict_thm31": self.verdicts["thm31"], "verdict_prop32": self.verdicts["prop32"],
            "verdict_thm33": self.verdicts["thm33"],
        }


def evaluate_bounds(x_terminal: np.ndarray, xstar_terminal: np.ndarray, theta: ThetaReport, constants: ConstantSet,
                    K: float = DEFAULT_K, prop41_mean: Optional[float] = None, metadata: Optional[dict] = None,
                    dictionary=None) -> BoundReport:
    """Assemble a :class:`BoundReport` from terminal samples, gaps and constants."""
    lhs_w1 = w1_empirical(SampleSet(x_terminal), SampleSet(xstar_terminal))
    lhs_d3 = dW3_dictionary_lower_bound(x_terminal, xstar_terminal, dictionary)
    n = min(len(x_terminal), len(xstar_terminal))
    noise = math.sqrt(float(np.var(x_terminal)) + float(np.var(xstar_terminal))) / math.sqrt(n)
    rhs31 = smooth_w3_rhs(theta, constants)
    rhs32 = prop32_rhs(theta, constants)
    rhs33 = f_evaluate(theta.theta_u, theta.theta_sigma, theta.theta_nu, constants)
    rhs33p = f_evaluate(theta.theta_u, theta.theta_sigma, theta.theta_nu, constants, d1_form="printed")
    ratios = {
        "thm31": lhs_d3 / rhs31 if rhs31 > 0 else (0.0 if lhs_d3 == 0 else math.inf),
        "prop32": lhs_w1 / rhs32 if rhs32 > 0 else (0.0 if lhs_w1 == 0 else math.inf),
        "thm33": lhs_w1 / rhs33 if rhs33 > 0 else (0.0 if lhs_w1 == 0 else math.inf),
    }
    report = BoundReport(theta, constants, rhs31, rhs32, rhs33, rhs33p, prop41_mean, lhs_w1, lhs_d3, noise, {},
                         ratios, theta.Theta <= K, K, dict(metadata or {}))
    report.verdicts = report.recompute_verdicts()
    return report
