from __future__ import annotations

import numpy as np
import pytest

from jumpwass.coefficients import Coefficient, JumpMap
from jumpwass.measures import FiniteDiscrete, GammaLevy, PointMass
from jumpwass.simulate import GridConfig, ProcessSpec


class Poly:
    """``x``, ``x**2`` or ``sin`` with analytic derivatives, for generator tests."""

    def __init__(self, kind: str):
        self.kind = kind

    def derivative(self, x, k):
        x = np.asarray(x, dtype=float)
        if self.kind == "x":
            return (x, np.ones_like(x), np.zeros_like(x), np.zeros_like(x))[k]
        if self.kind == "x2":
            return (x * x, 2 * x, 2 + 0 * x, 0 * x)[k]
        return (np.sin(x), np.cos(x), -np.sin(x), -np.cos(x))[k]

    def __call__(self, x):
        return self.derivative(x, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("JUMPWASS_CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture
def small_grid():
    return GridConfig(horizon=1.0, n_steps=50, n_paths=2000, seed=7)


def geometric(u=0.05, sigma=0.2, eta=0.1, rate=1.0, x0=1.0) -> ProcessSpec:
    return ProcessSpec(Coefficient.linear(u), Coefficient.linear(sigma), JumpMap(Coefficient.linear(eta)),
                       PointMass(rate, 1.0), x0)


def constant_spec(u=0.0, sigma=0.3, c=0.0, levy=None, x0=0.0) -> ProcessSpec:
    return ProcessSpec(Coefficient.constant(u), Coefficient.constant(sigma), JumpMap(Coefficient.constant(c)),
                       levy if levy is not None else FiniteDiscrete(()), x0)


def nonlinear_spec() -> ProcessSpec:
    return ProcessSpec(
        Coefficient.affine_bump(0.1, -0.3, 0.5, 1.0, 0.7),
        Coefficient.affine_bump(0.3, 0.05, 0.2, 1.2, 0.6),
        JumpMap(Coefficient.affine(0.1, 0.05)),
        PointMass(1.0, 1.0),
        1.0,
    )


def gamma_spec(alpha=1.0, c=0.3, sigma=0.2) -> ProcessSpec:
    return constant_spec(sigma=sigma, c=c, levy=GammaLevy(alpha))


@pytest.fixture
def geo():
    return geometric()
