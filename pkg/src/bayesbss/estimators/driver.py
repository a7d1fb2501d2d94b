"""Outer alternating-optimization driver shared by every algorithm."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DivergenceError, DomainError, NumericError, SingularSystemError
from ..model import MixingMatrix, SeparatingMatrix, SourceBlock
from ..priors import MixingPrior, PriorKind, SpatialPriorSpec
from .config import GAUSS_UNIT, Algorithm, EstimatorConfig, RunResult
from .jmap import (
    CoordinateVariant,
    coordinate_variant_for,
    jmap_block_update,
    jmap_coordinate_update,
    jmap_fixed_point_step,
    jmap_gradient_step,
    jmap_spatial_block_update,
    jmap_temporal_update,
    joint_criterion,
    ridge_sources,
    solve_system,
    spatial_criterion,
    temporal_criterion,
)
from .marginal import gaussian_evidence_logpdf, marginal_map_A_step
from .ml import ml_negative_loglik, ml_relative_gradient_step, whiteness_constrained_H
from .used_alg import DIVERGENCE_LIMIT, initial_mixing, used_alg_run


def _ridge_separator(A, lam):
    n = A.shape[1]
    try:
        return solve_system(A.T @ A + lam * np.eye(n), A.T)
    except SingularSystemError:
        return np.linalg.pinv(A)


def _initial_state(X, config):
    m = X.shape[0]
    n = config.source_count(m)
    if config.init_A is not None:
        A = np.array(config.init_A.data)
        if A.shape[0] != m:
            raise DimensionError(f"init_A has {A.shape[0]} rows for {m} sensors")
    else:
        A = initial_mixing(m, n, config.init_seed)
    return A


def _diverged(value, maximize=False):
    if not np.isfinite(value):
        return True
    return (-value if maximize else value) > DIVERGENCE_LIMIT


def _run_jmap(X, config: EstimatorConfig):
    hyper = config.hyper
    alg = config.algorithm
    A = _initial_state(X, config)
    law, prior = config.source_law, config.mixing_prior

    if alg is Algorithm.JMAP_BLOCK:
        def step(A, S):
            return jmap_block_update(A, S, X, hyper, per_sample=config.per_sample)

        def crit(A, S):
            return joint_criterion(A, S, X, hyper)
    elif alg is Algorithm.JMAP_SPATIAL:
        spatial = config.spatial or SpatialPriorSpec()

        def step(A, S):
            return jmap_spatial_block_update(A, S, X, hyper, spatial, per_sample=config.per_sample)

        def crit(A, S):
            return spatial_criterion(A, S, X, hyper, spatial)
    elif alg is Algorithm.JMAP_TEMPORAL:
        if config.temporal is None:
            raise DomainError("jmap_temporal needs a temporal prior (one weight per source)")
        temporal = config.temporal

        def step(A, S):
            return jmap_temporal_update(A, S, X, hyper, temporal, method=config.temporal_method)

        def crit(A, S):
            return temporal_criterion(A, S, X, hyper, temporal)
    elif alg is Algorithm.JMAP_COORDINATE:
        variant = coordinate_variant_for(prior)
        crit_prior = prior if variant is not CoordinateVariant.PA1 else MixingPrior(PriorKind.FROBENIUS)

        def step(A, S):
            return jmap_coordinate_update(A, S, X, hyper, variant, weights=prior.weights)

        def crit(A, S):
            return joint_criterion(A, S, X, hyper, GAUSS_UNIT, crit_prior)
    elif alg is Algorithm.JMAP_GRADIENT:
        def step(A, S):
            return jmap_gradient_step(A, S, X, hyper, law, prior, backtracking=config.backtracking)

        def crit(A, S):
            return joint_criterion(A, S, X, hyper, law, prior)
    else:  # JMAP_FIXED_POINT
        def step(A, S):
            return jmap_fixed_point_step(A, S, X, hyper, law, prior, backtracking=config.backtracking)

        def crit(A, S):
            return joint_criterion(A, S, X, hyper, law, prior)

    S = ridge_sources(A, X, max(hyper.lam, 1e-12))
    if law.positive_support and alg in (Algorithm.JMAP_GRADIENT, Algorithm.JMAP_FIXED_POINT):
        # later iterates are projected onto the support, but data whose initial
        # source estimate is negative does not fit the law at all
        bad = np.flatnonzero(np.any(S < 0, axis=0))
        if bad.size:
            raise NumericError(
                f"{law.family.value} law requires positive sources; the initial estimate is negative "
                f"at sample {bad[0]}",
                sample_index=int(bad[0]),
            )
        S = np.maximum(S, 1e-3)
    trace = []
    converged = False
    for _ in range(config.max_iters):
        S_new, A_new = step(A, S)
        J = crit(A_new, S_new)
        trace.append(J)
        if _diverged(J):
            raise DivergenceError(f"criterion diverged at iteration {len(trace)} (value {J:.3g})", trace=trace)
        delta = np.linalg.norm(A_new - A)
        A, S = A_new, S_new
        if delta < config.tol * (1.0 + np.linalg.norm(A)):
            converged = True
            break
    B = _ridge_separator(A, hyper.lam)
    return RunResult(MixingMatrix(A), SeparatingMatrix(B), SourceBlock(S), trace, len(trace), converged, alg)


def _run_separator(X, config: EstimatorConfig):
    hyper = config.hyper
    A0 = _initial_state(X, config)
    if A0.shape[0] != A0.shape[1]:
        raise DimensionError("relative-gradient algorithms need as many sources as sensors")
    B = np.linalg.inv(A0)
    law = config.source_law
    T = X.shape[1]
    trace = []
    converged = False
    for _ in range(config.max_iters):
        if config.algorithm is Algorithm.ML_RELATIVE_GRADIENT:
            B_new = ml_relative_gradient_step(B, X, law, hyper.gamma, natural=config.natural_gradient)
            Y = B_new @ X
            J = ml_negative_loglik(B_new, X, law)
        else:
            H = whiteness_constrained_H(B @ X, law, hyper.white_alpha, hyper.white_beta)
            B_new = B - hyper.gamma * (H @ B if config.natural_gradient else H)
            Y = B_new @ X
            J = float(np.sum((Y @ Y.T / T - np.eye(B.shape[0])) ** 2))
        trace.append(J)
        if _diverged(J):
            raise DivergenceError(f"criterion diverged at iteration {len(trace)} (value {J:.3g})", trace=trace)
        delta = np.linalg.norm(B_new - B)
        B = B_new
        if delta < config.tol * (1.0 + np.linalg.norm(B)):
            converged = True
            break
    A = np.linalg.pinv(B)
    return RunResult(MixingMatrix(A), SeparatingMatrix(B), SourceBlock(B @ X), trace, len(trace), converged,
                     config.algorithm)


def _run_marginal(X, config: EstimatorConfig):
    hyper = config.hyper
    A = _initial_state(X, config)
    trace = []
    converged = False
    for _ in range(config.max_iters):
        A_new = marginal_map_A_step(A, X, hyper, config.mixing_prior, backtracking=config.backtracking)
        ev = gaussian_evidence_logpdf(A_new, X, hyper, config.mixing_prior)
        trace.append(ev)
        if _diverged(ev, maximize=True):
            raise DivergenceError(f"evidence diverged at iteration {len(trace)} (value {ev:.3g})", trace=trace)
        delta = np.linalg.norm(A_new - A)
        A = A_new
        if delta < config.tol * (1.0 + np.linalg.norm(A)):
            converged = True
            break
    S = ridge_sources(A, X, hyper.lam)
    B = _ridge_separator(A, hyper.lam)
    return RunResult(MixingMatrix(A), SeparatingMatrix(B), SourceBlock(S), trace, len(trace), converged,
                     Algorithm.MARGINAL_MAP_A)


def run_estimator(X, config: EstimatorConfig) -> RunResult:
    """Run the configured algorithm until ``||dA||_F < tol (1 + ||A||_F)`` or ``max_iters``.

    Initialization uses ``config.init_A`` when given, otherwise the identity
    padded/truncated to ``m x n_sources`` plus a seeded ``N(0, 0.1^2)``
    perturbation. One criterion value is recorded per iteration.

    Raises
    ------
    DivergenceError
        When the criterion leaves the finite range or exceeds 1e12 in magnitude.
    """
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionError("X must be a non-empty m x T block")
    alg = config.algorithm
    if alg is Algorithm.USED_ALG:
        return used_alg_run(X, config)
    if alg in (Algorithm.ML_RELATIVE_GRADIENT, Algorithm.WHITENESS_CONSTRAINED):
        return _run_separator(X, config)
    if alg is Algorithm.MARGINAL_MAP_A:
        return _run_marginal(X, config)
    return _run_jmap(X, config)
