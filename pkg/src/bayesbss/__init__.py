"""Bayesian blind source separation.

Linear instantaneous mixing ``x(t) = A s(t) + e(t)`` with maximum-likelihood,
joint MAP and marginal MAP estimators, structured source priors, benchmark
signal generators, separation metrics and brute-force reference oracles.
"""

from .errors import (
    ApproximationError,
    BSSError,
    DimensionError,
    DivergenceError,
    DivisionGuardError,
    DomainError,
    NumericError,
    SingularSystemError,
    UnsupportedLawError,
)
from .model import (
    MixingMatrix,
    NoiseSpec,
    ObservationBlock,
    SeparatingMatrix,
    SourceBlock,
    apply_separator,
    mix,
)
from .priors import (
    Boundary,
    LawFamily,
    MixingPrior,
    PriorKind,
    SourceLaw,
    SpatialPriorSpec,
    TemporalPriorSpec,
    build_spatial_D,
    log_density,
    mixing_log_prior,
    mixing_prior_gradient,
    score_phi,
    temporal_penalty,
)
from .estimators import Algorithm, EstimatorConfig, HyperParams, RunResult, run_estimator
from .signals import ExampleId, ExampleSpec, example_mixing, generate_sources
from .metrics import MatchReport, amari_index, best_match, histogram, phase_scatter

__version__ = "0.1.0"
