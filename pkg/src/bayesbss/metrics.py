"""Separation quality under the permutation / scale ambiguity, plus the data
behind histogram and phase-space plots."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

MAX_EXHAUSTIVE = 8


@dataclass(frozen=True)
class MatchReport:
    """Result of matching estimated channels to true sources.

    Attributes
    ----------
    permutation : tuple
        ``permutation[i]`` is the estimated channel matched to true source
        ``i``, or ``None`` when there are more true sources than estimates.
    signs : tuple
        Sign (+1/-1) of the correlation of each matched pair (0 if unmatched).
    correlations : tuple
        Absolute Pearson correlation per true source (0 if unmatched).
    amari : float or None
        Amari index of ``B_hat @ A`` when the caller supplies a square one.
    """

    permutation: tuple
    signs: tuple
    correlations: tuple
    amari: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "signs": list(self.signs),
            "correlations": list(self.correlations),
            "amari": self.amari,
        }


def correlation_matrix(S_true, S_est) -> np.ndarray:
    """Pearson correlations ``r[i, k]`` between true row ``i`` and estimate row ``k``."""
    S_true = np.asarray(getattr(S_true, "data", S_true), dtype=np.float64)
    S_est = np.asarray(getattr(S_est, "data", S_est), dtype=np.float64)
    if S_true.ndim != 2 or S_est.ndim != 2:
        raise DimensionError("source blocks must be 2-D")
    if S_true.shape[1] != S_est.shape[1]:
        raise DimensionError(f"sample counts differ: {S_true.shape[1]} vs {S_est.shape[1]}")
    a = S_true - S_true.mean(axis=1, keepdims=True)
    b = S_est - S_est.mean(axis=1, keepdims=True)
    sa = np.sqrt(np.mean(a**2, axis=1))
    sb = np.sqrt(np.mean(b**2, axis=1))
    for name, sd in (("true", sa), ("estimated", sb)):
        zero = np.flatnonzero(sd == 0)
        if zero.size:
            raise DomainError(f"correlation undefined: {name} channel {zero[0]} has zero variance")
    return (a @ b.T) / S_true.shape[1] / np.outer(sa, sb)


def best_match(S_true, S_est, amari: Optional[float] = None) -> MatchReport:
    """Assign estimates to true sources maximizing the total ``|r|``.

    The search is exhaustive over injective assignments, which is exact and
    cheap at the handful of channels used here. When the counts differ only
    ``min(n_true, n_est)`` pairs are formed.
    """
    R = correlation_matrix(S_true, S_est)
    n_true, n_est = R.shape
    if max(n_true, n_est) > MAX_EXHAUSTIVE:
        raise DomainError(f"exhaustive matching supports at most {MAX_EXHAUSTIVE} channels")
    absR = np.abs(R)
    best, best_score = None, -np.inf
    if n_true <= n_est:
        for perm in itertools.permutations(range(n_est), n_true):
            score = sum(absR[i, k] for i, k in enumerate(perm))
            if score > best_score + 1e-15:
                best, best_score = list(perm), score
    else:
        for rows in itertools.permutations(range(n_true), n_est):
            score = sum(absR[i, k] for k, i in enumerate(rows))
            if score > best_score + 1e-15:
                best_score = score
                best = [None] * n_true
                for k, i in enumerate(rows):
                    best[i] = k
    signs = tuple(0 if k is None else (1 if R[i, k] >= 0 else -1) for i, k in enumerate(best))
    corrs = tuple(0.0 if k is None else float(absR[i, k]) for i, k in enumerate(best))
    return MatchReport(tuple(best), signs, corrs, amari)


def amari_index(G) -> float:
    """Normalized Amari error of a square global matrix ``G = B_hat A``.

    ``(1 / 2n(n-1)) * [sum_i (sum_j |g_ij| / max_j |g_ij| - 1)
    + sum_j (sum_i |g_ij| / max_i |g_ij| - 1)]``; 0 iff ``G`` is a scaled
    permutation, 1 at maximal confusion. Defined as 0 for ``n = 1``.
    """
    G = np.abs(np.asarray(G, dtype=np.float64))
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionError("amari index needs a square matrix")
    n = G.shape[0]
    if np.any(G.max(axis=1) == 0) or np.any(G.max(axis=0) == 0):
        raise DomainError("amari index undefined for a matrix with an all-zero row or column")
    if n == 1:
        return 0.0
    rows = np.sum(G.sum(axis=1) / G.max(axis=1) - 1.0)
    cols = np.sum(G.sum(axis=0) / G.max(axis=0) - 1.0)
    return float((rows + cols) / (2.0 * n * (n - 1)))


def histogram(series, bins: int, range=None):
    """Equal-width bin counts; the last bin is closed on the right.

    With ``range=None`` the bins span the data min..max so every sample is
    counted. With an explicit range, samples outside it are not counted.

    Returns
    -------
    counts : ndarray of int
    edges : ndarray, length ``bins + 1``
    """
    series = np.ravel(np.asarray(series, dtype=np.float64))
    if series.size == 0:
        raise DomainError("histogram of an empty series")
    if int(bins) < 1:
        raise DomainError("bins must be >= 1")
    counts, edges = np.histogram(series, bins=int(bins), range=range)
    return counts, edges


def phase_scatter(S, i: int, j: int) -> np.ndarray:
    """``(T, 2)`` array of pairs ``(s_i(t), s_j(t))`` in time order (0-based indices)."""
    S = np.asarray(getattr(S, "data", S), dtype=np.float64)
    n = S.shape[0]
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"channel index {idx} out of range for {n} channels")
    return np.column_stack([S[i], S[j]])
