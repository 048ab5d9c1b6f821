from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpwass.bounds import (
    D0,
    BoundReport,
    CardanProblem,
    ThetaReport,
    cardan_G,
    cardan_minimize,
    evaluate_bounds,
    f_coefficients,
    f_evaluate,
    generator_apply,
    generator_gap_check,
    min3b,
    prop32_coefficients,
    prop32_rhs,
    prop41_bound,
    smooth_w3_constant,
    smooth_w3_rhs,
    theta_from_run,
)
from jumpwass.coefficients import Coefficient, JumpMap
from jumpwass.distances import fm_discrete
from jumpwass.flow import ConstantSet
from jumpwass.measures import DiscreteMeasure, FiniteDiscrete, PointMass, pushforward, tilt_square
from jumpwass.simulate import GridConfig, ProcessSpec, run_coupled

from conftest import Poly, constant_spec, geometric

UNIT = ConstantSet.uniform(1.0)
positive = st.floats(1e-4, 1e4, allow_nan=False, allow_infinity=False)
theta_values = st.floats(0.0, 10.0, allow_nan=False)


def grid_min(p: CardanProblem, points: int = 100_000) -> float:
    """Brute-force minimum of ``G`` over a log-spaced grid wide enough to contain the minimizer."""
    centers = [math.log10(v) for v in ((p.D3 / p.D0) ** (2 / 3), p.D2 / p.D0) if v > 0]
    lo, hi = min(centers) - 4, max(centers) + 4
    return float(np.min(cardan_G(p, np.logspace(lo, hi, points))))


class TestCardan:
    def test_boundary_example(self):
        r = cardan_minimize((1.0, 0.0, 3.0, 1.0))
        assert r.case_tag == "a"
        assert r.alpha_star == pytest.approx(4.0, rel=1e-12)
        assert r.min_value == pytest.approx(3.75, rel=1e-12)
        assert r.upper_bound_min3b == pytest.approx(9.0, rel=1e-12)

    def test_trigonometric_case(self):
        r = cardan_minimize(CardanProblem(1.0, 0.0, 100.0, 1.0))
        assert r.case_tag == "b"
        # root of beta^3 - 100 beta - 2 = 0, from an arbitrary-precision solve
        assert r.alpha_star == pytest.approx(100.19980049840575, rel=1e-12)
        assert r.min_value == pytest.approx(20.009990019947659, rel=1e-12)
        assert r.min_value == pytest.approx(grid_min(CardanProblem(1.0, 0.0, 100.0, 1.0)), rel=1e-6)

    def test_stationarity(self):
        p = CardanProblem(2.0, 0.3, 0.7, 5.0)
        b = math.sqrt(cardan_minimize(p).alpha_star)
        assert p.D0 * b**3 - p.D2 * b - 2 * p.D3 == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(positive, positive, positive, positive)
    def test_grid_never_beats_closed_form(self, d0, d1, d2, d3):
        p = CardanProblem(d0, d1, d2, d3)
        r = cardan_minimize(p)
        assert r.case_tag in ("a", "b")
        g = grid_min(p, 20_000)
        assert r.min_value <= g * (1 + 1e-9)
        assert r.min_value >= g * (1 - 1e-6)
        assert r.min_value <= r.upper_bound_min3b * (1 + 1e-12)

    @pytest.mark.parametrize("d", [(-1.0, 1.0, 1.0, 1.0), (1.0, math.nan, 1.0, 1.0), (1.0, 1.0, math.inf, 1.0)])
    def test_rejects_invalid(self, d):
        with pytest.raises(ValueError):
            CardanProblem(*d)

    def test_degenerate_no_cube_term(self):
        # G = sqrt(a) + 1 + 4/sqrt(a): minimum 1 + 2 sqrt(4) at a = 4
        r = cardan_minimize((1.0, 1.0, 4.0, 0.0))
        assert r.case_tag == "degenerate"
        assert r.alpha_star == pytest.approx(4.0, rel=1e-5)
        assert r.min_value == pytest.approx(5.0, rel=1e-9)
        assert r.upper_bound_min3b == pytest.approx(1.0 + 2 * math.sqrt(3 * 4.0))

    def test_degenerate_monotone_goes_to_bracket_end(self):
        r = cardan_minimize((0.0, 1.0, 1.0, 1.0))
        assert r.alpha_star == pytest.approx(1e12)
        assert r.min_value == pytest.approx(1.0, abs=1e-5)
        assert r.upper_bound_min3b == 1.0

    def test_degenerate_no_middle_term(self):
        r = cardan_minimize((1.0, 0.0, 0.0, 1.0))
        # G = sqrt(a) + 1/a: minimum at a = 2^(2/3), value 3 / 2^(2/3)
        assert r.min_value == pytest.approx(3 / 2 ** (2 / 3), rel=1e-9)
        assert r.upper_bound_min3b == pytest.approx(3.0)

    def test_min3b_branch_continuity(self):
        # at D2^3 = 27 D0 D3^2 both branches of the explicit bound agree
        d0, d3 = 2.0, 0.5
        d2 = (27 * d0 * d3**2) ** (1 / 3)
        left = min3b(d0, 0.0, d2 * (1 - 1e-12), d3)
        right = min3b(d0, 0.0, d2 * (1 + 1e-12), d3)
        assert left == pytest.approx(right, rel=1e-9)

    @pytest.mark.parametrize("tiny", [1e-300, 1.1125369292536007e-308, 5e-324])
    def test_subnormal_coefficients_stay_finite(self, tiny):
        r = cardan_minimize((D0, tiny, tiny, tiny))
        assert 0 < r.min_value <= r.upper_bound_min3b < 1e-99
        assert 0 < prop32_rhs(ThetaReport(0.0, 0.0, tiny), UNIT) < 1e-99


class TestThetaReport:
    def test_sum_and_json(self):
        t = ThetaReport(0.1, 0.2, 0.3)
        assert t.Theta == pytest.approx(0.6)
        assert t.to_json()["Theta"] == t.Theta

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ThetaReport(-1e-3, 0.0, 0.0)

    def test_from_run_identical_specs(self, geo):
        run = run_coupled(geo, geo, GridConfig(n_steps=20, n_paths=100), node_count=5)
        t = theta_from_run(run)
        assert (t.theta_u, t.theta_sigma, t.theta_nu) == (0.0, 0.0, 0.0)
        assert t.n_paths == 100


class TestSmoothBound:
    def test_unit_constant(self):
        assert smooth_w3_constant(UNIT) == pytest.approx(11 / 6)
        assert smooth_w3_rhs(ThetaReport(0.5, 0.25, 0.25), UNIT) == pytest.approx(11 / 6)

    def test_zero_theta(self):
        assert smooth_w3_rhs(ThetaReport(0, 0, 0), UNIT) == 0.0

    def test_sqrt_branch(self):
        c = ConstantSet(0.0, 1.0, 0.0, 0.0, 0.0)
        assert smooth_w3_constant(c) == 1.0


class TestProp32:
    def test_zero(self):
        assert prop32_rhs(ThetaReport(0, 0, 0), UNIT) == 0.0

    def test_unit_frozen_value(self):
        # independently assembled at 50 digits from the coefficient table
        assert prop32_rhs(ThetaReport(1.0, 0.0, 0.0), UNIT) == pytest.approx(7.3223674439993625, rel=1e-13)

    def test_coefficients(self):
        d0, d1, d2, d3 = prop32_coefficients(ThetaReport(0.0, 2.0, 0.0), UNIT)
        assert d0 == pytest.approx(2 * math.sqrt(2 / math.pi))
        assert d1 == pytest.approx(0.5 * (1 + 2 + 1 / 3) * 2)
        assert d2 == pytest.approx(UNIT.C2 / 2 * 2 * 2)
        assert d3 == pytest.approx(UNIT.C3 / 6 * 2)

    def test_depends_on_total_only(self):
        total = prop32_rhs(ThetaReport(0.6, 0.0, 0.0), UNIT)
        assert prop32_rhs(ThetaReport(0.1, 0.2, 0.3), UNIT) == pytest.approx(total, rel=1e-15)

    def test_increasing_on_grid(self):
        vals = [prop32_rhs(ThetaReport(t, 0, 0), UNIT) for t in np.logspace(-6, 2, 40)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert min(vals) >= 0


class TestF:
    def test_zero(self):
        assert f_evaluate(0, 0, 0, UNIT) == 0.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            f_evaluate(0.0, -1.0, 0.0, UNIT)

    def test_no_jump_gap_limit(self):
        _, d1, d2, _ = f_coefficients(0.0, 0.01, 0.0, UNIT)
        value = f_evaluate(0.0, 0.01, 0.0, UNIT)
        assert value == pytest.approx(d1 + 2 * math.sqrt(3) * math.sqrt(D0 * d2), rel=1e-14)
        assert value == pytest.approx(0.28139531957706837, rel=1e-13)
        direct = cardan_minimize((D0, d1, d2, 1e-12)).min_value
        assert value >= direct

    def test_d0_constant(self):
        assert D0 == pytest.approx(2 * math.sqrt(2 / math.pi))

    def test_scaling_band(self):
        ratios = [f_evaluate(s, s, s, UNIT) / s ** (1 / 3) for s in (1e-2, 1e-3, 1e-4)]
        assert max(ratios) / min(ratios) <= 2.0

    @pytest.mark.parametrize("which, exponent", [(1, 0.5), (2, 1 / 3)])
    def test_asymptotic_exponents(self, which, exponent):
        s = np.logspace(-12, -9, 4)
        args = [[0.0, 0.0, 0.0] for _ in s]
        for a, v in zip(args, s):
            a[which] = v
        f = [f_evaluate(*a, UNIT) for a in args]
        assert np.polyfit(np.log(s), np.log(f), 1)[0] == pytest.approx(exponent, abs=0.01)

    def test_printed_and_derived_forms(self):
        c = ConstantSet(1.0, 2.0, 3.0, 4.0, 6.0)
        _, derived, _, _ = f_coefficients(0.1, 0.2, 0.3, c)
        _, printed, _, _ = f_coefficients(0.1, 0.2, 0.3, c, d1_form="printed")
        assert derived == pytest.approx(0.5 * (2 * math.sqrt(2) * 0.1 + 1 * 0.2 + (1 + 1) * 0.3))
        assert printed == pytest.approx(0.5 * (2 * math.sqrt(2) * 0.1 + (1 + 2) * 0.2 + 1 * 0.3))
        with pytest.raises(ValueError):
            f_coefficients(0.1, 0.2, 0.3, c, d1_form="other")

    @settings(max_examples=100, deadline=None)
    @given(theta_values, theta_values, theta_values, st.integers(0, 2), st.floats(0.0, 5.0))
    def test_monotone_in_each_argument(self, tu, ts, tn, which, bump):
        base = [tu, ts, tn]
        more = list(base)
        more[which] += bump
        assert f_evaluate(*more, UNIT) >= f_evaluate(*base, UNIT) * (1 - 1e-12)
        t0, t1 = ThetaReport(*base), ThetaReport(*more)
        assert prop32_rhs(t1, UNIT) >= prop32_rhs(t0, UNIT) * (1 - 1e-12)


class TestProp41:
    def test_identical_is_zero(self):
        nu = DiscreteMeasure([1.0, -0.5], [1.0, 2.0])
        g = JumpMap(Coefficient.linear(0.2))
        assert prop41_bound(g, g, nu, nu, x=1.5) == 0.0

    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_geometric_display(self, x):
        eta, eta_s, a, a_s = 0.1, 0.12, 1.0, 1.5
        got = prop41_bound(JumpMap(Coefficient.linear(eta)), JumpMap(Coefficient.linear(eta_s)),
                           DiscreteMeasure([1.0], [a]), DiscreteMeasure([1.0], [a_s]), x=x)
        expected = (a * abs(eta**2 - eta_s**2) * x**2 + a_s * eta_s**2 * x**2 * abs(eta - eta_s) * abs(x)
                    + eta_s**2 * x**2 * abs(a - a_s))
        assert got == pytest.approx(expected, rel=1e-14)

    def test_callables_accepted(self):
        nu = DiscreteMeasure([1.0], [1.0])
        assert prop41_bound(lambda y: 0.1 * y, lambda y: 0.2 * y, nu, nu) == pytest.approx(0.03 + 0.004)

    def test_empty_measures(self):
        e = DiscreteMeasure.empty()
        assert prop41_bound(lambda y: y, lambda y: 2 * y, e, e) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_dominates_fm(self, seed):
        r = np.random.default_rng(seed)
        n, m = r.integers(1, 5, size=2)
        nu = DiscreteMeasure(r.normal(size=n), r.uniform(0, 2, n))
        nus = DiscreteMeasure(np.concatenate([nu.locations[: n // 2], r.normal(size=m)]),
                              r.uniform(0, 2, n // 2 + m))
        k, ks = r.normal(0, 1, 2)
        g, gs = (lambda y: k * y), (lambda y: ks * y)
        lhs = fm_discrete(tilt_square(pushforward(nu, g)), tilt_square(pushforward(nus, gs)))
        assert prop41_bound(g, gs, nu, nus) >= lhs - 1e-9


class TestGenerator:
    def test_identity_gives_drift(self):
        spec = geometric(u=0.3, sigma=0.4, eta=0.2, rate=2.0)
        x = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(generator_apply(spec, Poly("x"), 0.0, x), 0.3 * x, rtol=1e-14)

    def test_quadratic_without_jumps(self):
        spec = ProcessSpec(Coefficient.linear(0.3), Coefficient.constant(0.4), x0=1.0)
        assert generator_apply(spec, Poly("x2"), 0.0, 2.0) == pytest.approx(2 * 2.0 * 0.6 + 0.16)

    def test_quadratic_with_point_mass(self):
        u, s, eta, a, x = 0.3, 0.4, 0.2, 2.0, 1.5
        spec = geometric(u=u, sigma=s, eta=eta, rate=a)
        expected = 2 * x * u * x + (s * x) ** 2 + a * eta**2 * x**2
        assert generator_apply(spec, Poly("x2"), 0.0, x) == pytest.approx(expected, rel=1e-14)

    def test_finite_discrete_measure(self):
        levy = FiniteDiscrete(((1.0, 0.5), (-2.0, 0.25)))
        spec = ProcessSpec(g=JumpMap(Coefficient.constant(1.0)), levy=levy, x0=0.0)
        # sum of w y^2 over atoms
        assert generator_apply(spec, Poly("x2"), 0.0, 0.7) == pytest.approx(0.5 + 0.25 * 4)


class TestGapCheck:
    def test_identical_specs(self, geo):
        r = generator_gap_check(geo, geo, Poly("sin"), GridConfig(n_steps=10, seed=3), n_outer=200, n_inner=20)
        assert r.lhs == 0.0
        assert r.rhs == pytest.approx(0.0, abs=1e-15)
        assert r.verdict == "pass"

    def test_small_budget_inconclusive(self):
        x, xs = constant_spec(u=0.0), constant_spec(u=0.2)
        r = generator_gap_check(x, xs, Poly("sin"), GridConfig(n_steps=10), n_outer=50, n_inner=20)
        assert r.verdict == "inconclusive"

    def test_linear_closed_form(self):
        x = ProcessSpec(Coefficient.linear(0.05), Coefficient.linear(0.2), x0=1.0)
        xs = ProcessSpec(Coefficient.linear(0.3), Coefficient.linear(0.2), x0=1.0)
        r = generator_gap_check(x, xs, Poly("x"), GridConfig(n_steps=100, seed=9), n_outer=1000, n_inner=10,
                                inner_steps=20)
        exact = math.exp(0.3) - math.exp(0.05)
        assert r.verdict == "pass"
        assert abs(r.lhs - exact) <= 3 * r.lhs_se + 2e-3  # Euler bias at 100 steps is ~1e-3
        assert abs(r.rhs - exact) <= 3 * r.rhs_se + 2e-3

    def test_jump_gap(self):
        x, xs = geometric(eta=0.1, rate=1.0), geometric(eta=0.3, rate=2.0)
        r = generator_gap_check(x, xs, Poly("sin"), GridConfig(n_steps=20, seed=4), n_outer=400, n_inner=50)
        assert r.verdict in ("pass", "inconclusive")
        assert r.z <= 4.0
        assert json.loads(json.dumps(r.to_json()))["n_outer"] == 400

    def test_too_many_atoms_rejected(self):
        levy = FiniteDiscrete(tuple((float(i), 0.1) for i in range(1, 20)))
        spec = ProcessSpec(Coefficient.zero(), Coefficient.constant(0.1), JumpMap(Coefficient.constant(0.1)), levy,
                           0.0)
        with pytest.raises(ValueError, match="atoms"):
            generator_gap_check(spec, constant_spec(), Poly("sin"), GridConfig(n_steps=5), n_outer=5, n_inner=5)


class TestReport:
    def report(self, shift=0.01, theta=ThetaReport(0.05, 0.02, 0.01), constants=UNIT):
        r = np.random.default_rng(0)
        x = r.normal(size=2000)
        return evaluate_bounds(x, x + shift, theta, constants, metadata={"seed": 0})

    def test_verdicts_recomputable(self):
        rep = self.report()
        assert rep.verdicts == rep.recompute_verdicts()
        assert set(rep.verdicts.values()) == {"pass"}
        assert not rep.violated
        assert rep.theta_within_K

    def test_json_and_csv(self):
        rep = self.report()
        doc = json.loads(json.dumps(rep.to_json()))
        assert doc["certified"] is False
        assert doc["theta"]["Theta"] == pytest.approx(0.08)
        assert doc["constants"]["A1"] == 1.0
        assert tuple(rep.csv_row()) == BoundReport.CSV_FIELDS
        assert rep.rhs_thm33_printed > 0

    def test_violation_detected(self):
        rep = self.report(shift=1.0, theta=ThetaReport(1e-8, 0.0, 0.0), constants=ConstantSet.uniform(1e-6))
        assert rep.verdicts["thm33"] == "violated"
        assert rep.violated

    def test_noise_band_inconclusive(self):
        rep = self.report(shift=0.0)
        rep.lhs_w1 = rep.rhs_thm33 + rep.lhs_noise
        assert rep.recompute_verdicts()["thm33"] == "inconclusive"

    def test_theta_condition_reported_not_enforced(self):
        r = np.random.default_rng(1)
        x = r.normal(size=100)
        rep = evaluate_bounds(x, x, ThetaReport(20.0, 0.0, 0.0), UNIT, K=10.0)
        assert not rep.theta_within_K
        assert rep.rhs_thm33 > 0

    def test_ratios(self):
        rep = self.report()
        assert rep.ratios["thm33"] == pytest.approx(rep.lhs_w1 / rep.rhs_thm33)
        assert 0 <= rep.ratios["thm31"] < 1

    @pytest.mark.parametrize("pm", [PointMass(1.0, 1.0)])
    def test_prop41_mean_kept(self, pm):
        rep = evaluate_bounds(np.zeros(3), np.zeros(3), ThetaReport(0, 0, 0), UNIT, prop41_mean=0.25)
        assert rep.to_json()["prop41_mean"] == 0.25
        assert set(rep.verdicts.values()) == {"pass"}


@pytest.mark.parametrize("theta", [ThetaReport(0.01, 0.0, 0.0), ThetaReport(0.0, 0.01, 0.0),
                                   ThetaReport(0.0, 0.0, 0.01)])
def test_refined_bound_against_aggregate(theta):
    # both bounds are finite and positive whenever some gap is positive
    assert f_evaluate(theta.theta_u, theta.theta_sigma, theta.theta_nu, UNIT) > 0
    assert prop32_rhs(theta, UNIT) > 0
