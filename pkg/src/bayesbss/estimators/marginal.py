"""Marginal MAP: Gaussian evidence for ``A``, the marginal of ``s`` with ``A``
integrated out, and the Laplace approximation for non-Gaussian laws.

With ``s ~ N(0, (sigma^2/lam) I)`` and noise ``N(0, sigma^2 I)`` the evidence
of one sample is

    log p(x | A) = -1/2 log det(A^t A + lam I) - x^t (x - A s_hat) / (2 sigma^2)
                   - m/2 log(2 pi sigma^2) + n/2 log lam,

``s_hat = (A^t A + lam I)^{-1} A^t x``, which is exactly
``log N(x; 0, sigma^2 (A A^t / lam + I))``. The mixing prior contributes
``-(mu / 2 sigma^2) psi(A)`` once per block.
"""

from __future__ import annotations

import numpy as np

from ..errors import ApproximationError, DimensionError, DomainError, NumericError
from ..priors import LawFamily, MixingPrior, SourceLaw, log_density, mixing_penalty, mixing_prior_gradient, score_derivative, score_phi
from .config import FROBENIUS, GAUSS_UNIT, HyperParams
from .jmap import MAX_HALVINGS, solve_system


def _as_columns(x) -> np.ndarray:
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _mat(A) -> np.ndarray:
    return np.asarray(getattr(A, "data", A), dtype=np.float64)


def _require_positive(value, name):
    if not value > 0:
        raise DomainError(f"{name} must be > 0, got {value}")


def gaussian_evidence_logpdf(A, x, hyper: HyperParams, prior: MixingPrior = FROBENIUS) -> float:
    """Log evidence ``log p(x | A) + log p(A)`` for one sample or an ``m x T`` block.

    Parameters
    ----------
    A : (m, n) array or MixingMatrix
    x : (m,) vector or (m, T) block
    hyper : HyperParams
        Uses ``lam``, ``mu`` and ``sigma_eps``.
    prior : MixingPrior
        Its penalty is weighted by ``mu / (2 sigma_eps^2)``; pass the uniform
        prior for the bare likelihood.
    """
    _require_positive(hyper.lam, "lam")
    A = _mat(A)
    X = _as_columns(x)
    if A.shape[0] != X.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows for {X.shape[0]} sensors")
    m, n = A.shape
    T = X.shape[1]
    s2 = hyper.noise_var
    M = A.T @ A + hyper.lam * np.eye(n)
    sign, logdet = np.linalg.slogdet(M)
    S_hat = solve_system(M, A.T @ X)
    quad = float(np.sum(X * (X - A @ S_hat)))
    const = T * (-0.5 * m * np.log(2.0 * np.pi * s2) + 0.5 * n * np.log(hyper.lam))
    value = -0.5 * T * logdet - quad / (2.0 * s2) + const
    if hyper.mu:
        value -= hyper.mu * mixing_penalty(prior, A) / (2.0 * s2)
    return float(value)


def evidence_gradient(A, X, hyper: HyperParams, prior: MixingPrior = FROBENIUS) -> np.ndarray:
    """Gradient in ``A`` of :func:`gaussian_evidence_logpdf` summed over the block.

    ``-T A (A^t A + lam I)^{-1} + (1/sigma^2) sum_t (x - A s_hat) s_hat^t
    - (mu / 2 sigma^2) psi'(A)``.
    """
    _require_positive(hyper.lam, "lam")
    A = _mat(A)
    X = _as_columns(X)
    n = A.shape[1]
    T = X.shape[1]
    s2 = hyper.noise_var
    M = A.T @ A + hyper.lam * np.eye(n)
    Minv = solve_system(M, np.eye(n))
    S_hat = Minv @ A.T @ X
    G = -T * A @ Minv + (X - A @ S_hat) @ S_hat.T / s2
    if hyper.mu:
        G -= hyper.mu * mixing_prior_gradient(prior, A) / (2.0 * s2)
    return G


def marginal_map_A_step(A, X, hyper: HyperParams, prior: MixingPrior = FROBENIUS, backtracking: bool = True,
                        tol: float = 1e-12) -> np.ndarray:
    """One ascent step on the block evidence.

    The step is ``A + eta * (sigma^2 / T) * grad`` with ``eta = hyper.mmap_step``.
    With ``backtracking`` ``eta`` is halved (at most 30 times) until the
    evidence does not decrease; ``A`` is returned unchanged when the scaled
    gradient is below ``tol`` or no acceptable step exists.
    """
    A = _mat(A)
    X = _as_columns(X)
    direction = hyper.noise_var / X.shape[1] * evidence_gradient(A, X, hyper, prior)
    if np.linalg.norm(direction) < tol:
        return A.copy()
    eta = hyper.mmap_step
    if not backtracking:
        return A + eta * direction
    base = gaussian_evidence_logpdf(A, X, hyper, prior)
    for _ in range(MAX_HALVINGS + 1):
        cand = A + eta * direction
        try:
            val = gaussian_evidence_logpdf(cand, X, hyper, prior)
        except NumericError:
            val = -np.inf
        if val >= base:
            return cand
        eta /= 2
    return A.copy()


def marginal_s_logpdf(s, x, hyper: HyperParams) -> float:
    """Log-density of the sources of one sample with ``A`` integrated out.

    Writing ``x = A s = S a`` with ``S`` the ``m x mn`` block matrix built from
    ``s``, ``S^t S + mu I`` is block diagonal with ``m`` copies of
    ``s s^t + mu I``, so ``det = [mu^(n-1) (s^t s + mu)]^m`` and
    ``S a_hat = x ||s||^2 / (||s||^2 + mu)``. The result is

        -m/2 [(n-1) log mu + log(||s||^2 + mu)] - ||x||^2 mu / (2 sigma^2 (||s||^2 + mu))
        - lam ||s||^2 / (2 sigma^2) - m/2 log(2 pi sigma^2) + m n/2 log mu.
    """
    _require_positive(hyper.mu, "mu")
    s = np.ravel(np.asarray(s, dtype=np.float64))
    x = np.ravel(np.asarray(x, dtype=np.float64))
    m, n = x.size, s.size
    mu, s2 = hyper.mu, hyper.noise_var
    ss = float(s @ s)
    xx = float(x @ x)
    logdet = m * ((n - 1) * np.log(mu) + np.log(ss + mu))
    return float(
        -0.5 * logdet
        - xx * mu / (2.0 * s2 * (ss + mu))
        - hyper.lam * ss / (2.0 * s2)
        - 0.5 * m * np.log(2.0 * np.pi * s2)
        + 0.5 * m * n * np.log(mu)
    )


# --- Laplace approximation -------------------------------------------------------------

def _column_objective(A, S, X, lam, law):
    """Per-column ``||x - A s||^2 + lam phi(s)``, ``inf`` outside the support."""
    fit = np.sum((X - A @ S) ** 2, axis=0)
    if lam == 0:
        return fit
    if law.positive_support:
        ok = np.all(S > 0, axis=0)
        out = np.full(S.shape[1], np.inf)
        if np.any(ok):
            out[ok] = fit[ok] - 2.0 * lam * np.sum(log_density(law, S[:, ok]), axis=0)
        return out
    return fit - 2.0 * lam * np.sum(log_density(law, S), axis=0)


def source_hessians(A, S, lam: float, law: SourceLaw) -> np.ndarray:
    """``(T, n, n)`` stack of ``2 A^t A + 2 lam diag(phi_law'(s(t)))``."""
    A = _mat(A)
    S = _as_columns(S)
    base = 2.0 * A.T @ A
    curv = 2.0 * lam * np.asarray(score_derivative(law, S)).T  # (T, n)
    H = np.broadcast_to(base, (S.shape[1],) + base.shape).copy()
    idx = np.arange(base.shape[0])
    H[:, idx, idx] += curv
    return H


def source_modes(A, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, tol: float = 1e-10, max_iter: int = 200):
    """Minimize ``||x - A s||^2 + lam phi(s)`` independently for each column.

    Damped Newton with Armijo backtracking, falling back to a gradient step
    for columns whose Hessian is not positive definite. Starts from the ridge
    solution (projected into the support for positive laws).

    Returns
    -------
    S_hat : (n, T) array
    converged : bool
    """
    A = _mat(A)
    X = _as_columns(X)
    lam = hyper.lam
    n = A.shape[1]
    S = solve_system(A.T @ A + max(lam, 1e-12) * np.eye(n), A.T @ X)
    if law.positive_support:
        S = np.maximum(S, 1e-3)
    J = _column_objective(A, S, X, lam, law)
    for _ in range(max_iter):
        G = -2.0 * A.T @ (X - A @ S) + 2.0 * lam * np.asarray(score_phi(law, S))
        gmax = np.max(np.abs(G), axis=0)
        active = gmax > tol * (1.0 + np.max(np.abs(S), axis=0))
        if not np.any(active):
            return S, True
        H = source_hessians(A, S, lam, law)
        D = -G.copy()
        for t in np.flatnonzero(active):
            try:
                L = np.linalg.cholesky(H[t])
                D[:, t] = -np.linalg.solve(L.T, np.linalg.solve(L, G[:, t]))
            except np.linalg.LinAlgError:
                D[:, t] = -G[:, t] / (2.0 * np.linalg.norm(A, 2) ** 2 + 2.0 * lam + 1.0)
        step = np.where(active, 1.0, 0.0)
        slope = np.sum(G * D, axis=0)
        pending = active.copy()
        S_new = S.copy()
        for _ in range(60):
            cand = S + step * D
            Jc = _column_objective(A, cand, X, lam, law)
            ok = pending & (Jc <= J + 1e-4 * step * slope)
            S_new[:, ok] = cand[:, ok]
            J = np.where(ok, Jc, J)
            pending &= ~ok
            if not np.any(pending):
                break
            step = np.where(pending, step / 2.0, step)
        if np.array_equal(S_new, S):
            # no column could make progress: treat as converged to precision
            return S, bool(np.all(gmax[active] < 1e-6 * (1.0 + np.max(np.abs(S), axis=0))[active]))
        S = S_new
    return S, False


def laplace_log_marginal(A, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS,
                         tol: float = 1e-10, max_iter: int = 200) -> float:
    """Laplace approximation of ``log int exp(-J(A, s) / (2 sigma^2)) ds`` summed over samples.

    ``sum_t [-1/2 log det H_t + n/2 log(4 pi sigma^2)] - J(A, S_hat) / (2 sigma^2)``
    with ``H_t`` the Hessian of ``J`` in ``s(t)`` at the per-sample mode and
    ``J`` including ``mu psi(A)`` once. For the Gaussian law this differs from
    :func:`gaussian_evidence_logpdf` by an ``A``-independent constant.

    Raises
    ------
    ApproximationError
        If a Laplace-law mode sits at the kink ``s_j = 0``, a Hessian is not
        positive definite, or the inner minimization fails.
    """
    A = _mat(A)
    X = _as_columns(X)
    if A.shape[0] != X.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows for {X.shape[0]} sensors")
    n = A.shape[1]
    s2 = hyper.noise_var
    S, ok = source_modes(A, X, hyper, law, tol=tol, max_iter=max_iter)
    if law.family is LawFamily.LAPLACE and hyper.lam > 0:
        near = np.abs(S) < 1e-6 * (1.0 + np.max(np.abs(S)))
        if np.any(near):
            t = int(np.flatnonzero(np.any(near, axis=0))[0])
            raise ApproximationError(f"Laplace-law mode at the non-smooth point s=0 (sample {t})")
    if not ok:
        raise ApproximationError("inner minimization over the sources did not converge")
    H = source_hessians(A, S, hyper.lam, law)
    sign, logdet = np.linalg.slogdet(H)
    if np.any(sign <= 0):
        t = int(np.flatnonzero(sign <= 0)[0])
        raise ApproximationError(f"Hessian at the mode is not positive definite (sample {t})")
    J = float(np.sum(_column_objective(A, S, X, hyper.lam, law)))
    if hyper.mu:
        J += hyper.mu * mixing_penalty(prior, A)
    return float(np.sum(-0.5 * logdet) + X.shape[1] * 0.5 * n * np.log(4.0 * np.pi * s2) - J / (2.0 * s2))
