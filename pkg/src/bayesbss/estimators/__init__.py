"""Separation algorithms: ML relative gradient, joint MAP, marginal MAP and
the reference loop, plus the shared driver."""

from .config import Algorithm, EstimatorConfig, HyperParams, RunResult
from .driver import run_estimator
from .jmap import (
    CoordinateVariant,
    block_A_update,
    fixed_point_map,
    fixed_point_residuals,
    invert_score,
    jmap_block_update,
    jmap_coordinate_update,
    jmap_fixed_point_step,
    jmap_gradient_step,
    jmap_spatial_block_update,
    jmap_temporal_update,
    joint_criterion,
    joint_gradients,
    rank_one_A_update,
    ridge_sources,
    spatial_criterion,
    temporal_criterion,
    temporal_recursion_sources,
    temporal_smoother_sources,
)
from .marginal import (
    evidence_gradient,
    gaussian_evidence_logpdf,
    laplace_log_marginal,
    marginal_map_A_step,
    marginal_s_logpdf,
    source_hessians,
    source_modes,
)
from .ml import ml_negative_loglik, ml_relative_gradient_step, whiteness_constrained_H
from .used_alg import NONLINEARITIES, nonlinearity, used_alg_run, whitening_matrix

__all__ = [name for name in dir() if not name.startswith("_")]
