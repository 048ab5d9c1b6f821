"""Acceptance suite: one test per criterion, each printing a ``CRITERION n: PASS|FAIL`` line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
when output capture is on). Monte Carlo criteria use fixed seeds, so the
numbers in the printed details are reproducible.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from jumpwass.bounds import (
    cardan_G,
    cardan_minimize,
    f_evaluate,
    generator_gap_check,
    prop41_bound,
    smooth_w3_rhs,
)
from jumpwass.coefficients import Coefficient, JumpMap
from jumpwass.distances import assignment_oracle, fm_bruteforce_oracle, fm_discrete, fm_point_masses, w1_empirical
from jumpwass.flow import gaussian_constants, variation_paths
from jumpwass.measures import DiscreteMeasure, frullani_quadrature, pushforward, tilt_square
from jumpwass.pipeline import run_sweep, run_verify
from jumpwass.scenario import load_scenario
from jumpwass.simulate import GridConfig, ProcessSpec, simulate_coupled
from jumpwass.smoothing import SmoothedFunction, default_catalog, verify_lemma_a1

from conftest import Poly, constant_spec, geometric, nonlinear_spec

SCENARIOS = Path(__file__).resolve().parents[1] / "demos" / "scenarios"


@pytest.fixture
def criterion(capsys):
    """``emit(n, ok, detail)`` prints the criterion line and fails the test when ``ok`` is false."""
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_criterion_01_cardan(criterion):
    rng = np.random.default_rng(1)
    worst_excess = worst_gap = 0.0
    over_bound = 0
    with Timer() as t:
        for _ in range(1000):
            d = np.exp(rng.uniform(-5, 5, 4))
            r = cardan_minimize(tuple(d))
            scales = [math.log10((d[3] / d[0]) ** (2 / 3)), math.log10(d[2] / d[0])]
            alphas = np.logspace(min(scales) - 4, max(scales) + 4, 100_000)
            g = float(np.min(cardan_G(r_problem(d), alphas)))
            worst_excess = max(worst_excess, (r.min_value - g) / g)  # grid below closed form
            worst_gap = max(worst_gap, abs(r.min_value - g) / g)
            over_bound += r.min_value > r.upper_bound_min3b * (1 + 1e-12)
    ok = worst_gap <= 1e-6 and worst_excess <= 1e-9 and over_bound == 0 and t.elapsed < 10
    criterion(1, ok, f"max rel gap to grid {worst_gap:.2e}, grid improvement {max(worst_excess, 0):.2e}, "
                     f"{over_bound} above explicit bound, {t.elapsed:.1f}s")


def r_problem(d):
    from jumpwass.bounds import CardanProblem

    return CardanProblem(*map(float, d))


def test_criterion_02_frullani(criterion):
    vals = (0.5, 1.0, 2.0, 5.0)
    with Timer() as t:
        err = max(abs(frullani_quadrature(a, b) - abs(math.log(b / a))) for a, b in itertools.product(vals, vals))
    criterion(2, err <= 1e-6 and t.elapsed < 1, f"max error {err:.2e} over 16 pairs, {t.elapsed:.2f}s")


def test_criterion_03_gaussian_constants(criterion):
    with Timer() as t:
        c1, c2, c3 = gaussian_constants()
    errs = (abs(c1 - 1), abs(c2 - math.sqrt(2 / math.pi)), abs(c3 - 4 * norm.pdf(1.0)))
    ok = errs[0] <= 1e-8 and errs[1] <= 1e-8 and errs[2] <= 1e-6 and t.elapsed < 1
    criterion(3, ok, f"C1={c1:.12f} C2={c2:.12f} C3={c3:.12f}, errors {max(errs):.1e}, {t.elapsed:.2f}s")


def test_criterion_04_smoothing_lemma(criterion):
    with Timer() as t:
        rep = verify_lemma_a1(alphas=(1.0, 0.1, 0.01))
        abs_fn = next(h for h in default_catalog() if h.name == "abs")
        eq_err = max(abs(SmoothedFunction(abs_fn, a)(0.0) - math.sqrt(2 * a / math.pi)) for a in (1.0, 0.1, 0.01))
    slack = min(min(r["deviation_slack"], r["d1_slack"], r["d2_slack"], r["d3_slack"]) for r in rep["results"])
    ok = rep["passed"] and slack >= -1e-6 and eq_err <= 1e-6 and t.elapsed < 30
    criterion(4, ok, f"{len(rep['results'])} (h, alpha) pairs, min slack {slack:.2e}, "
                     f"equality-case error {eq_err:.1e}, {t.elapsed:.1f}s")


def test_criterion_05_distance_oracles(criterion):
    rng = np.random.default_rng(5)
    outside = 0
    with Timer() as t:
        for _ in range(200):
            n, m = rng.integers(1, 5, size=2)
            a = DiscreteMeasure(rng.normal(0, 2, n), rng.uniform(0, 1.5, n))
            b = DiscreteMeasure(rng.normal(0, 2, m), rng.uniform(0, 1.5, m))
            lp = fm_discrete(a, b)
            o = fm_bruteforce_oracle(a, b)
            outside += not (o.lower - 1e-9 <= lp <= o.upper + 1e-9)
        w1_err = 0.0
        for _ in range(200):
            k = int(rng.integers(1, 9))
            x, y = rng.normal(size=k), rng.normal(0.5, 2.0, size=k)
            w1_err = max(w1_err, abs(w1_empirical(x, y) - assignment_oracle(x, y)))
        mass_err = max(abs(fm_discrete(DiscreteMeasure([1.0], [a]), DiscreteMeasure([1.0], [b])) - abs(a - b))
                       for a, b in ((2.0, 3.0), (0.1, 5.0), (1.0, 0.0), (0.3, 0.3)))
        d = np.array([0.1, 0.5, 1.0, 2.0, 7.5])
        lp_pm = [fm_discrete(DiscreteMeasure([0.0], [1.0]), DiscreteMeasure([v], [1.0])) for v in d]
        pm_err = float(max(np.max(np.abs(np.array(lp_pm) - 2 * d / (d + 2))),
                           np.max(np.abs(fm_point_masses(1.0, 0.0, 1.0, d) - 2 * d / (d + 2)))))
    ok = outside == 0 and w1_err <= 1e-12 and mass_err <= 1e-9 and pm_err <= 1e-9 and t.elapsed < 60
    criterion(5, ok, f"{outside}/200 FM values outside oracle bracket, W1 vs assignment {w1_err:.1e}, "
                     f"closed forms {max(mass_err, pm_err):.1e}, {t.elapsed:.1f}s")


def test_criterion_06_jump_bound_domination(criterion):
    rng = np.random.default_rng(6)
    violations, worst = 0, math.inf
    with Timer() as t:
        for i in range(200):
            n, m = rng.integers(1, 6, size=2)
            nu = DiscreteMeasure(rng.normal(0, 1.5, n), rng.uniform(0, 2, n))
            shared = nu.locations[: int(rng.integers(0, nu.size + 1))]
            nus = DiscreteMeasure(np.concatenate([shared, rng.normal(0, 1.5, m)]),
                                  rng.uniform(0, 2, shared.size + m))
            if i % 2:
                # product-form maps from the coefficient catalog at a random state
                g = JumpMap(Coefficient.affine(*rng.normal(0, 0.5, 2)))
                gs = JumpMap(Coefficient.affine_bump(*rng.normal(0, 0.5, 3)))
                x = float(rng.normal())
                gm, gsm = g.at(0.0, x), gs.at(0.0, x)
            else:
                # general nonlinear maps
                p = rng.normal(0, 0.7, 4)
                gm = lambda y, p=p: p[0] * y + p[1] * np.sin(y)  # noqa: E731
                gsm = lambda y, p=p: p[2] * y + p[3] * np.tanh(y)  # noqa: E731
            lhs = fm_discrete(tilt_square(pushforward(nu, gm)), tilt_square(pushforward(nus, gsm)))
            rhs = prop41_bound(gm, gsm, nu, nus)
            violations += rhs < lhs - 1e-9
            worst = min(worst, rhs - lhs)
    criterion(6, violations == 0 and t.elapsed < 60,
              f"{violations} violations on 200 instances, min slack {worst:.2e}, {t.elapsed:.1f}s")


def test_criterion_07_simulator_calibration(criterion):
    spec = geometric(u=0.05, sigma=0.2, eta=0.1, rate=1.0, x0=1.0)
    grid = GridConfig(horizon=1.0, n_steps=400, n_paths=100_000, seed=2024)
    with Timer() as t:
        xs, bitwise = [], True
        for block in simulate_coupled(spec, spec, grid, threads=2):
            xs.append(block.x_terminal)
            bitwise &= bool(np.array_equal(block.x_terminal, block.xstar_terminal))
        full = next(simulate_coupled(spec, spec, grid, record="full", path_ids=np.arange(256)))
        bitwise &= bool(np.array_equal(full.x_full, full.xstar_full))
    x = np.concatenate(xs)
    se = x.std(ddof=1) / math.sqrt(x.size)
    z = abs(x.mean() - math.exp(0.05)) / se
    criterion(7, z <= 4 and bitwise and t.elapsed < 120,
              f"mean {x.mean():.6f} vs {math.exp(0.05):.6f}, z={z:.2f}, identical-spec paths bitwise equal: "
              f"{bitwise}, {t.elapsed:.1f}s")


def test_criterion_08_flow_consistency(criterion):
    grid = GridConfig(horizon=1.0, n_steps=100, n_paths=10_000, seed=88)
    worst = 0.0
    with Timer() as t:
        for h in (1e-3, 1e-4):
            lo, mid, hi = variation_paths(nonlinear_spec(), grid, [1.0 - h, 1.0, 1.0 + h])
            fd1 = (hi.x - lo.x) / (2 * h)
            fd2 = (hi.x - 2 * mid.x + lo.x) / h**2
            # relative error in the norm over all paths and nodes
            e1 = np.linalg.norm(fd1 - mid.y1) / np.linalg.norm(mid.y1)
            e2 = np.linalg.norm(fd2[:, 1:] - mid.y2[:, 1:]) / np.linalg.norm(mid.y2[:, 1:])
            worst = max(worst, e1, e2)
    criterion(8, worst <= 1e-2 and t.elapsed < 120,
              f"max relative error of y1, y2 vs finite differences {worst:.2e} (10^4 paths), {t.elapsed:.1f}s")


CANONICAL = ("drift_gap", "sigma_gap", "rate_gap", "jump_size_gap", "gamma_alpha_beta")


@pytest.mark.slow
def test_criterion_09_end_to_end(criterion, tmp_path):
    lines, ok = [], True
    with Timer() as t:
        for name in CANONICAL:
            sc = load_scenario(SCENARIOS / f"{name}.json").with_overrides(out=str(tmp_path))
            assert sc.grid.n_paths == 100_000
            rep = run_verify(sc).report
            th = rep.theta
            f_rhs = f_evaluate(th.theta_u, th.theta_sigma, th.theta_nu, rep.constants)
            s_rhs = smooth_w3_rhs(th, rep.constants)
            this = rep.lhs_w1 <= f_rhs and rep.lhs_dW3_lower <= s_rhs and not rep.violated
            ok &= this
            lines.append(f"{name}: w1 {rep.lhs_w1:.4g} <= F {f_rhs:.4g}, dW3 {rep.lhs_dW3_lower:.4g} <= "
                         f"{s_rhs:.4g} [{'ok' if this else 'VIOLATED'}]")
    ok &= t.elapsed < 900
    criterion(9, ok, "; ".join(lines) + f"; {t.elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_10_scaling_exponents(criterion, tmp_path):
    def slope(rows, key):
        th = np.array([r[key] for r in rows])
        f = np.array([r["rhs_thm33"] for r in rows])
        decades = math.log10(th.max() / th.min())
        return float(np.polyfit(np.log(th), np.log(f), 1)[0]), decades

    with Timer() as t:
        sig = load_scenario(SCENARIOS / "sweep_sigma.json").with_overrides(out=str(tmp_path))
        s = np.logspace(-4, -1, 7)  # sigma*^2 - sigma^2 over three decades
        rows_s = run_sweep(sig, "xstar.sigma.c", list(np.sqrt(0.09 + s)))
        jump = load_scenario(SCENARIOS / "sweep_jump_rate.json").with_overrides(out=str(tmp_path))
        rows_j = run_sweep(jump, "xstar.levy.rate", list(1.0 + np.logspace(-3, 0, 7)))
    k_s, dec_s = slope(rows_s, "theta_sigma")
    k_j, dec_j = slope(rows_j, "theta_nu")
    ok = abs(k_s - 0.5) <= 0.1 and abs(k_j - 1 / 3) <= 0.1 and min(dec_s, dec_j) >= 2.99 and t.elapsed < 300
    criterion(10, ok, f"slope vs theta_sigma {k_s:.3f} over {dec_s:.2f} decades, slope vs theta_nu {k_j:.3f} "
                      f"over {dec_j:.2f} decades, {t.elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_11_generator_gap(criterion):
    with Timer() as t:
        jumps = geometric().levy
        x = constant_spec(u=0.0, sigma=0.3, c=0.2, levy=jumps, x0=0.5)
        xs = constant_spec(u=0.25, sigma=0.3, c=0.2, levy=jumps, x0=0.5)
        drift = generator_gap_check(x, xs, Poly("sin"), GridConfig(n_steps=20, seed=11), n_outer=10_000,
                                    n_inner=1_000)
        lx = ProcessSpec(Coefficient.linear(0.05), Coefficient.linear(0.2), x0=1.0)
        lxs = ProcessSpec(Coefficient.linear(0.10), Coefficient.linear(0.2), x0=1.0)
        lin = generator_gap_check(lx, lxs, Poly("x"), GridConfig(n_steps=200, seed=12), n_outer=10_000,
                                  n_inner=1_000, inner_steps=20)
    exact = math.exp(0.10) - math.exp(0.05)
    z_l = abs(lin.lhs - exact) / lin.lhs_se
    z_r = abs(lin.rhs - exact) / lin.rhs_se
    ok = drift.verdict == "pass" and lin.verdict == "pass" and z_l <= 3 and z_r <= 3 and t.elapsed < 600
    criterion(11, ok, f"drift gap lhs {drift.lhs:.5f} rhs {drift.rhs:.5f} z={drift.z:.2f} ({drift.verdict}); "
                      f"linear exact {exact:.5f}, lhs z={z_l:.2f}, rhs z={z_r:.2f}; {t.elapsed:.0f}s")


def test_reports_are_json(tmp_path):
    """The verify artifacts used above are plain JSON with provenance."""
    sc = load_scenario(SCENARIOS / "identical.json").with_overrides(out=str(tmp_path), paths=500, steps=20)
    res = run_verify(sc)
    doc = json.loads(Path(res.artifacts["report_json"]).read_text())
    assert doc["metadata"]["scenario_hash"] == sc.hash
    assert set(doc["verdicts"].values()) == {"pass"}
