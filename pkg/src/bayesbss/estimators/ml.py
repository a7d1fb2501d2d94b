"""Noiseless maximum-likelihood separation by relative-gradient updates of B."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DomainError, NumericError
from ..priors import SourceLaw, log_density, score_phi


def _mat(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "data", obj), dtype=np.float64)


def _column_scores(law: SourceLaw, Y: np.ndarray, paper_table: bool = False) -> np.ndarray:
    """Elementwise score of ``Y``; support violations name the offending sample."""
    if law.positive_support:
        bad = np.flatnonzero(np.any(~(Y > 0), axis=0))
        if bad.size:
            raise NumericError(
                f"{law.family.value} law needs positive values; sample {bad[0]} violates the support",
                sample_index=int(bad[0]),
            )
    Phi = np.asarray(score_phi(law, Y, paper_table=paper_table)) if np.all(np.isfinite(Y)) else None
    if Phi is None or not np.all(np.isfinite(Phi)):
        finite = np.isfinite(Y) if Phi is None else np.isfinite(Phi)
        bad = np.flatnonzero(np.any(~finite, axis=0))
        raise NumericError(f"non-finite score at sample {bad[0]}", sample_index=int(bad[0]))
    return Phi


def relative_gradient_H(Y, law: SourceLaw) -> np.ndarray:
    """Batch average ``(1/T) sum_t phi(y) y^t - I``."""
    Y = _mat(Y)
    Phi = _column_scores(law, Y)
    return Phi @ Y.T / Y.shape[1] - np.eye(Y.shape[0])


def ml_relative_gradient_step(B, X, law: SourceLaw, gamma: float, natural: bool = False) -> np.ndarray:
    """One update ``B - gamma * H`` with ``H = (1/T) sum_t [phi(y) y^t - I]``, ``y = B x``.

    Parameters
    ----------
    B : (n, m) array or SeparatingMatrix
    X : (m, T) array or ObservationBlock
    law : SourceLaw
    gamma : float
        Step size.
    natural : bool
        Use ``B - gamma * H B`` (equivariant form) instead.

    Raises
    ------
    NumericError
        If the score is not finite, e.g. a positive-support law meeting a
        negative output; ``sample_index`` identifies the column.
    """
    B = _mat(B)
    X = _mat(X)
    if B.shape[1] != X.shape[0]:
        raise DimensionError(f"B has {B.shape[1]} columns for {X.shape[0]} sensors")
    if X.shape[1] < 1:
        raise DimensionError("empty observation block")
    H = relative_gradient_H(B @ X, law)
    step = H @ B if natural else H
    return B - gamma * step


def whiteness_constrained_H(Y, law: SourceLaw, alpha: float, beta: float) -> np.ndarray:
    """Batch average of ``alpha (y y^t - I) + beta (phi(y) y^t + y phi(y)^t)``."""
    Y = _mat(Y)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise DimensionError("Y must be a non-empty 2-D block")
    T = Y.shape[1]
    H = alpha * (Y @ Y.T / T - np.eye(Y.shape[0]))
    if beta != 0:
        Phi = _column_scores(law, Y)
        C = Phi @ Y.T / T
        H = H + beta * (C + C.T)
    return H


def ml_negative_loglik(B, X, law: SourceLaw) -> float:
    """``-log|det B| - (1/T) sum_t sum_i log p(y_i(t))`` for square ``B``."""
    B = _mat(B)
    Y = B @ _mat(X)
    sign, logdet = np.linalg.slogdet(B)
    if sign == 0:
        return np.inf
    try:
        lp = np.sum(log_density(law, Y)) / Y.shape[1]
    except DomainError:
        return np.inf
    return float(-logdet - lp)
