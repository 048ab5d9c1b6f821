"""Wasserstein bounds between jump-diffusions, evaluated and checked by Monte Carlo.

Subpackages by layer:

* :mod:`jumpwass.measures` -- Lévy measure specs, discretization, tilting, pushforward.
* :mod:`jumpwass.distances` -- empirical W1, Fortet-Mourier LP, smooth-Wasserstein lower bounds.
* :mod:`jumpwass.simulate` -- coupled Euler simulation and characteristic gaps.
* :mod:`jumpwass.flow` -- flow derivatives and moment constants.
* :mod:`jumpwass.smoothing` -- Gaussian smoothing of Lipschitz functions.
* :mod:`jumpwass.bounds` -- bound formulas and the generator-gap check.
* :mod:`jumpwass.scenario`, :mod:`jumpwass.pipeline`, :mod:`jumpwass.cli` -- batch front end.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    BoundReport,
    CardanProblem,
    ThetaReport,
    cardan_minimize,
    f_evaluate,
    generator_apply,
    generator_gap_check,
    prop32_rhs,
    prop41_bound,
    smooth_w3_rhs,
)
from .distances import (  # noqa: E402
    SampleSet,
    TestFunctionDictionary,
    dW3_dictionary_lower_bound,
    fm_bruteforce_oracle,
    fm_discrete,
    w1_empirical,
)
from .flow import ConstantSet, VariationState, estimate_constants, variation_paths, vstar_derivatives_mc  # noqa: E402
from .measures import (  # noqa: E402
    DiscreteMeasure,
    FiniteDiscrete,
    GammaLevy,
    PointMass,
    TruncatedDensity,
    discretize,
    frullani_tv,
    pushforward,
    tilt_square,
    tv_distance,
)
from .scenario import Scenario, load_scenario, parse_scenario  # noqa: E402
from .simulate import (  # noqa: E402
    CoupledPathSample,
    GridConfig,
    ProcessSpec,
    characteristics_along_path,
    euler_jump_path,
    simulate_coupled,
)
from .smoothing import SmoothedFunction, smooth_deriv, smooth_eval, verify_lemma_a1  # noqa: E402

__all__ = [
    "__version__",
    "BoundReport", "CardanProblem", "ThetaReport", "cardan_minimize", "f_evaluate", "generator_apply",
    "generator_gap_check", "prop32_rhs", "prop41_bound", "smooth_w3_rhs",
    "SampleSet", "TestFunctionDictionary", "dW3_dictionary_lower_bound", "fm_bruteforce_oracle", "fm_discrete",
    "w1_empirical",
    "ConstantSet", "VariationState", "estimate_constants", "variation_paths", "vstar_derivatives_mc",
    "DiscreteMeasure", "FiniteDiscrete", "GammaLevy", "PointMass", "TruncatedDensity", "discretize",
    "frullani_tv", "pushforward", "tilt_square", "tv_distance",
    "Scenario", "load_scenario", "parse_scenario",
    "CoupledPathSample", "GridConfig", "ProcessSpec", "characteristics_along_path", "euler_jump_path",
    "simulate_coupled",
    "SmoothedFunction", "smooth_deriv", "smooth_eval", "verify_lemma_a1",
]
