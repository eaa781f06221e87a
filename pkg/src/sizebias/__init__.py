"""Bayesian predictive inference for finite populations under size-biased
sampling, with ignorable-model and design-based baselines and a simulation
harness."""

__version__ = "0.1.0"

from .baselines import HTResult, ht_estimate, ig_infer, systematic_pps
from .distributions import (
    RandomStream,
    StructuredCovariance,
    sample_inverse_gamma,
    sample_truncated_normal,
)
from .gibbs import GibbsConfig, GibbsDraws, GibbsState, run_gibbs
from .harness import (
    ExperimentCell,
    NigConfig,
    generate_population,
    nig_infer,
    observe,
    run_cell,
)
from .model import (
    FinitePopulation,
    ObservedData,
    SuperParams,
    ZVector,
    in_conditional_region,
    in_feasible_region,
    inclusion_probs,
    nu_to_z,
    selection_log_prob,
    z_to_nu,
)
from .mvnprob import RectangleProblem, log_mvn_rectangle_prob, mvn_rectangle_prob
from .normconst import ConstantEstimate, NormConstConfig, log_normalizer
from .sir import (
    IntervalEstimate,
    WeightedDraws,
    compute_weights,
    finite_population_functionals,
    resample_without_replacement,
    summarize,
)

__all__ = [
    "__version__",
    "RandomStream",
    "StructuredCovariance",
    "sample_truncated_normal",
    "sample_inverse_gamma",
    "SuperParams",
    "FinitePopulation",
    "ObservedData",
    "ZVector",
    "nu_to_z",
    "z_to_nu",
    "inclusion_probs",
    "in_feasible_region",
    "in_conditional_region",
    "selection_log_prob",
    "RectangleProblem",
    "mvn_rectangle_prob",
    "log_mvn_rectangle_prob",
    "GibbsConfig",
    "GibbsState",
    "GibbsDraws",
    "run_gibbs",
    "NormConstConfig",
    "ConstantEstimate",
    "log_normalizer",
    "WeightedDraws",
    "IntervalEstimate",
    "compute_weights",
    "resample_without_replacement",
    "summarize",
    "finite_population_functionals",
    "HTResult",
    "systematic_pps",
    "ht_estimate",
    "ig_infer",
    "NigConfig",
    "ExperimentCell",
    "generate_population",
    "observe",
    "nig_infer",
    "run_cell",
]
