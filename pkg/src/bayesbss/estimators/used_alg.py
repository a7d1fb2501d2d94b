"""The reference separation loop used for the benchmark experiments.

Each iteration

1. estimates the sources by ridge regression, ``y = (A^t A + lam I)^{-1} A^t x``;
2. applies an elementwise nonlinearity, ``s = g(y)``;
3. moves ``A`` along the normalized evidence-gradient direction with the data
   term evaluated at ``s``:
   ``D = (1/T) sum_t (x - A s) s^t - sigma^2 A (A^t A + lam I)^{-1} - (mu / 2T) psi'(A)``
   and ``A <- A + eta D``.

By default the observations are first whitened (projected on their leading
``min(m, n)`` principal directions and scaled to unit variance); the loop then
runs in whitened coordinates and the estimates are mapped back.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DivergenceError, DomainError, NumericError
from ..model import MixingMatrix, SeparatingMatrix, SourceBlock
from ..priors import mixing_prior_gradient
from .config import Algorithm, EstimatorConfig, RunResult
from .jmap import joint_criterion, solve_system

DIVERGENCE_LIMIT = 1e12


def _g_tanh(z, c):
    return c * np.tanh(z / c)


def _g_identity(z, c):
    return z


def _g_clip(z, c):
    return np.clip(z, -c, c)


def _g_soft(z, c):
    return np.sign(z) * np.maximum(np.abs(z) - c, 0.0)


NONLINEARITIES = {
    "tanh": _g_tanh,  # c tanh(z / c): unit slope at 0, saturates at +-c
    "identity": _g_identity,
    "clip": _g_clip,  # hard saturation at +-c
    "soft": _g_soft,  # soft threshold at c
}


def nonlinearity(name: str):
    """Return ``g(z, c)`` by name; see :data:`NONLINEARITIES`."""
    key = str(name).lower().replace("-", "_")
    if key in ("soft_threshold", "softthreshold"):
        key = "soft"
    if key not in NONLINEARITIES:
        raise DomainError(f"unknown nonlinearity {name!r}; valid names: {', '.join(NONLINEARITIES)}")
    return NONLINEARITIES[key]


def whitening_matrix(X, k: int) -> np.ndarray:
    """``k x m`` matrix ``Lambda_k^{-1/2} U_k^t`` from the leading eigenpairs of ``X X^t / T``."""
    C = X @ X.T / X.shape[1]
    w, U = np.linalg.eigh(C)
    order = np.argsort(w)[::-1][:k]
    w, U = w[order], U[:, order]
    if np.any(w <= 1e-12 * max(w[0], 1e-300)):
        raise NumericError("observations are rank deficient; cannot whiten")
    # fix eigenvector signs so the transform is deterministic
    signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(k)])
    U = U * signs
    return (U / np.sqrt(w)).T


def initial_mixing(m: int, n: int, seed: int) -> np.ndarray:
    """Identity padded/truncated to ``m x n`` plus ``N(0, 0.1^2)`` seeded perturbation."""
    rng = np.random.default_rng(seed)
    return np.eye(m, n) + 0.1 * rng.standard_normal((m, n))


def used_alg_run(X, config: EstimatorConfig) -> RunResult:
    """Run the reference loop for ``config.max_iters`` iterations (or until converged).

    Raises
    ------
    DivergenceError
        If the criterion exceeds 1e12 or becomes non-finite; the partial
        trace is attached.
    """
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DimensionError("X must be a non-empty m x T block")
    if config.algorithm is not Algorithm.USED_ALG:
        raise DomainError(f"used_alg_run called with algorithm {config.algorithm.value}")
    hyper = config.hyper
    law, prior = config.source_law, config.mixing_prior
    m, T = X.shape
    n = config.source_count(m)
    if config.init_A is not None and config.init_A.n_sensors != m:
        raise DimensionError(f"init_A has {config.init_A.n_sensors} rows for {m} sensors")
    g = nonlinearity(config.g)
    c = config.g_scale

    W = whitening_matrix(X, min(m, n)) if config.whiten else np.eye(m)
    Xw = W @ X
    if config.init_A is not None:
        A = W @ config.init_A.data
    else:
        A = initial_mixing(W.shape[0], n, config.init_seed)
    lam, mu, s2 = hyper.lam, hyper.mu, hyper.noise_var
    eye = np.eye(n)

    def sources(A):
        return g(solve_system(A.T @ A + lam * eye, A.T @ Xw), c)

    trace = []
    converged = False
    for _ in range(config.max_iters):
        M = A.T @ A + lam * eye
        S = g(solve_system(M, A.T @ Xw), c)
        D = (Xw - A @ S) @ S.T / T - s2 * A @ solve_system(M, eye)
        if mu:
            D -= mu / (2.0 * T) * mixing_prior_gradient(prior, A)
        A_new = A + hyper.mmap_step * D
        try:
            J = joint_criterion(A_new, sources(A_new), Xw, hyper, law, prior)
        except NumericError:
            J = np.inf
        trace.append(J)
        if not np.isfinite(J) or J > DIVERGENCE_LIMIT:
            raise DivergenceError(f"criterion diverged at iteration {len(trace)} (value {J:.3g})", trace=trace)
        delta = np.linalg.norm(A_new - A)
        A = A_new
        if delta < config.tol * (1.0 + np.linalg.norm(A)):
            converged = True
            break

    S_hat = sources(A)
    A_hat = np.linalg.pinv(W) @ A
    B_hat = solve_system(A.T @ A + lam * eye, A.T @ W)
    return RunResult(
        MixingMatrix(A_hat),
        SeparatingMatrix(B_hat),
        SourceBlock(S_hat),
        trace,
        len(trace),
        converged,
        Algorithm.USED_ALG,
    )
