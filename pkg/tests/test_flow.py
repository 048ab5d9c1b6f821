from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from jumpwass.coefficients import Coefficient, JumpMap
from jumpwass.flow import (
    ConstantSet,
    default_start_grid,
    estimate_constants,
    gaussian_constants,
    variation_paths,
    vstar_derivatives_mc,
)
from jumpwass.simulate import GridConfig, ProcessSpec

from conftest import Poly, constant_spec, geometric, nonlinear_spec

GRID = GridConfig(horizon=1.0, n_steps=50, n_paths=2000, seed=17)


def jump_free(spec: ProcessSpec) -> ProcessSpec:
    return ProcessSpec(spec.u, spec.sigma, JumpMap(), None, spec.x0)


class TestGaussianConstants:
    def test_values(self):
        c1, c2, c3 = gaussian_constants()
        assert c1 == pytest.approx(1.0, abs=1e-10)
        assert c2 == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)
        assert c3 == pytest.approx(4 * norm.pdf(1.0), abs=1e-8)

    def test_constant_set_defaults_agree(self):
        cs = ConstantSet.uniform(1.0)
        np.testing.assert_allclose((cs.C1, cs.C2, cs.C3), gaussian_constants(), atol=1e-10)


class TestVariations:
    def test_initial_condition(self):
        (state,) = variation_paths(nonlinear_spec(), GRID, [1.0], n_paths=10)
        np.testing.assert_array_equal(state.y1[:, 0], 1.0)
        np.testing.assert_array_equal(state.y2[:, 0], 0.0)
        np.testing.assert_array_equal(state.y3[:, 0], 0.0)

    def test_linear_flow(self):
        (state,) = variation_paths(geometric(), GRID, [1.0], n_paths=200)
        np.testing.assert_allclose(state.y1, state.x, rtol=1e-12)
        np.testing.assert_array_equal(state.y2, 0.0)
        np.testing.assert_array_equal(state.y3, 0.0)

    def test_linear_flow_scales_with_start(self):
        a, b = variation_paths(geometric(), GRID, [1.0, 2.5], n_paths=100)
        np.testing.assert_allclose(b.x, 2.5 * a.x, rtol=1e-12)

    def test_translation_flow(self):
        (state,) = variation_paths(constant_spec(u=0.1, sigma=0.4, c=0.2, levy=geometric().levy), GRID, [0.3],
                                   n_paths=200)
        np.testing.assert_array_equal(state.y1, 1.0)
        np.testing.assert_array_equal(state.y2, 0.0)
        np.testing.assert_array_equal(state.y3, 0.0)

    @pytest.mark.parametrize("h", [1e-3, 1e-4])
    def test_finite_difference_consistency(self, h):
        x0 = 1.0
        lo, mid, hi = variation_paths(nonlinear_spec(), GRID, [x0 - h, x0, x0 + h], n_paths=500)
        fd1 = (hi.x[:, -1] - lo.x[:, -1]) / (2 * h)
        fd2 = (hi.x[:, -1] - 2 * mid.x[:, -1] + lo.x[:, -1]) / h**2
        assert np.max(np.abs(fd1 - mid.y1[:, -1])) <= 1e-2 * np.max(np.abs(mid.y1[:, -1]))
        assert np.max(np.abs(fd2 - mid.y2[:, -1])) <= 1e-2 * np.max(np.abs(mid.y2[:, -1]))

    def test_third_variation_by_differencing_y2(self):
        h = 1e-4
        lo, mid, hi = variation_paths(nonlinear_spec(), GRID, [1 - h, 1.0, 1 + h], n_paths=200)
        fd3 = (hi.y2[:, -1] - lo.y2[:, -1]) / (2 * h)
        assert np.max(np.abs(fd3 - mid.y3[:, -1])) <= 1e-3 * np.max(np.abs(mid.y3[:, -1]))

    def test_jump_free_flow_is_increasing(self):
        grid = GRID.replace(n_steps=200)
        (state,) = variation_paths(jump_free(nonlinear_spec()), grid, [1.0], n_paths=1000)
        assert np.all(state.y1 > 0)


class TestConstants:
    def test_constant_coefficients(self):
        cs = estimate_constants(constant_spec(sigma=0.3, c=0.5, levy=geometric().levy), GRID, n_paths=200)
        assert (cs.A1, cs.B1, cs.B2) == (0.0, 0.0, 0.0)
        assert cs.A2 == pytest.approx(1.5) and cs.B3 == pytest.approx(1.5)

    def test_safety_factor_scales(self):
        spec = nonlinear_spec()
        a = estimate_constants(spec, GRID, n_paths=300, safety=1.0)
        b = estimate_constants(spec, GRID, n_paths=300, safety=2.0)
        for name in ("A1", "A2", "B1", "B2", "B3"):
            assert getattr(b, name) == pytest.approx(2 * getattr(a, name), rel=1e-12)

    def test_geometric_finite_with_small_errors(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            cs = estimate_constants(geometric(), GRID, n_paths=2000)
        assert cs.flagged == []
        for name in ("A2", "B3"):
            v = getattr(cs, name)
            assert math.isfinite(v) and v > 0
            assert cs.std_errors[name] < 0.2 * v

    def test_provenance(self):
        cs = estimate_constants(nonlinear_spec(), GRID, n_paths=100, safety=1.7)
        md = cs.metadata
        assert md["n_paths"] == 100 and md["safety_factor"] == 1.7 and md["seed"] == GRID.seed
        assert md["start_grid"] == pytest.approx(list(default_start_grid(1.0)))

    def test_start_grid_defaults(self):
        np.testing.assert_allclose(default_start_grid(2.0), np.linspace(1.0, 4.0, 9))
        np.testing.assert_allclose(default_start_grid(0.0), np.linspace(-1.0, 1.0, 9))

    def test_a2_dominates_first_moment_squared(self):
        cs = estimate_constants(nonlinear_spec(), GRID, n_paths=500)
        assert cs.A2 >= max(cs.metadata["sup_y1_sq_mean_abs_y1_terminal"]) ** 2

    def test_holder_consistency(self):
        (state,) = variation_paths(nonlinear_spec(), GRID, [1.0], n_paths=2000)
        sup_y1y2 = np.max(np.abs(state.y1 * state.y2), axis=1)
        sup_y1sq = np.max(state.y1**2, axis=1)
        sup_y2sq = np.max(state.y2**2, axis=1)
        lhs = sup_y1y2.mean()
        rhs = math.sqrt(sup_y1sq.mean() * sup_y2sq.mean())
        assert lhs <= rhs + 3 * sup_y1y2.std(ddof=1) / math.sqrt(sup_y1y2.size)

    def test_json_round_trip(self):
        cs = estimate_constants(nonlinear_spec(), GRID, n_paths=50)
        assert ConstantSet.from_json(cs.to_json()) == cs

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ConstantSet(-1.0, 1.0, 1.0, 1.0, 1.0)

    def test_unknown_json_field(self):
        with pytest.raises(ValueError, match="unknown"):
            ConstantSet.from_json({**ConstantSet.uniform().to_json(), "A4": 1.0})


class TestVstarDerivatives:
    def test_identity_on_linear_flow(self):
        r = vstar_derivatives_mc(geometric(), Poly("x"), 0.0, 1.0, 2000, GRID)
        assert r["d1"] == pytest.approx(r["y1_mean"], rel=1e-12)
        assert r["d2"] == 0.0

    def test_constant_spec_matches_difference_quotient(self):
        spec = constant_spec(u=0.1, sigma=0.5, c=0.3, levy=geometric().levy)
        h = Poly("sin")
        e = 1e-5
        r = vstar_derivatives_mc(spec, h, 0.2, 0.4, 4000, GRID)
        up = vstar_derivatives_mc(spec, h, 0.2, 0.4 + e, 4000, GRID)["v"]
        dn = vstar_derivatives_mc(spec, h, 0.2, 0.4 - e, 4000, GRID)["v"]
        assert r["d1"] == pytest.approx((up - dn) / (2 * e), abs=1e-8)
        assert r["d2"] == pytest.approx((up - 2 * r["v"] + dn) / e**2, abs=1e-4)

    def test_at_horizon_is_h(self):
        r = vstar_derivatives_mc(nonlinear_spec(), Poly("sin"), 1.0, 0.3, 10, GRID)
        # one zero-length step: the flow is the identity
        assert r["v"] == pytest.approx(math.sin(0.3))
        assert r["d1"] == pytest.approx(math.cos(0.3))

    def test_second_derivative_bound(self):
        spec = nonlinear_spec()
        cs = estimate_constants(spec, GRID, n_paths=2000, safety=1.0)
        h = Poly("sin")  # sup |h'| = sup |h''| = 1
        for x in default_start_grid(spec.x0, 5):
            r = vstar_derivatives_mc(spec, h, 0.0, float(x), 2000, GRID)
            assert abs(r["d2"]) <= cs.A1 + cs.A2 + 3 * r["d2_se"]

    def test_rejects_time_outside_horizon(self):
        with pytest.raises(ValueError):
            vstar_derivatives_mc(geometric(), Poly("x"), 1.5, 1.0, 10, GRID)
