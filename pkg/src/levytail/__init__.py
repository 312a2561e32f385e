"""Densities of compound Poisson and infinitely divisible laws from their
Levy densities, with numerical checks of subexponential tail behaviour."""

from .charfn import (
    CfSamples,
    cf_power,
    compound_poisson_cf,
    exponential_tilt,
    invert_cf,
    invert_cf_to_density,
    lattice_cf,
    levy_khintchine_cf,
    spectrally_positive_cf,
)
from .convolution import (
    SeriesTruncation,
    compound_poisson_density,
    convolve,
    kesten_bound_profile,
    nfold,
    recover_jump_density,
)
from .counterexample import SemistableParams, demonstrate_failure
from .diagnostics import (
    ald_check,
    ani_check,
    long_tail_check,
    steutel_ratio,
    subexp_check,
    tail_equivalence,
)
from .errors import LevyTailError
from .levy_model import (
    GeneralizedDensity,
    GridFunction,
    GridParams,
    JumpDensitySpec,
    LevyTriplet,
    discretize,
    jump_spec,
    levy_integrability_check,
    normalize_g1,
)
from .mle import consistency_experiment, fit_mle, log_likelihood, sample_id_distribution

__version__ = "0.1.0"

__all__ = [
    "CfSamples", "GeneralizedDensity", "GridFunction", "GridParams", "JumpDensitySpec",
    "LevyTailError", "LevyTriplet", "SemistableParams", "SeriesTruncation", "ald_check",
    "ani_check", "cf_power", "compound_poisson_cf", "compound_poisson_density",
    "consistency_experiment", "convolve", "demonstrate_failure", "discretize",
    "exponential_tilt", "fit_mle", "invert_cf", "invert_cf_to_density", "jump_spec",
    "kesten_bound_profile", "lattice_cf", "levy_integrability_check", "levy_khintchine_cf",
    "log_likelihood", "long_tail_check", "nfold", "normalize_g1", "recover_jump_density",
    "sample_id_distribution", "spectrally_positive_cf", "steutel_ratio", "subexp_check",
    "tail_equivalence",
]
