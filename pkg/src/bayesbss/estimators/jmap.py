"""Joint MAP estimation of ``(A, S)``.

All updates work on the criterion

    J(A, S) = sum_t ||x(t) - A s(t)||^2 + lam * phi(S) + mu * psi(A)

with ``phi(S) = -2 sum log p(s)`` (so the unit Gaussian law gives ``||S||_F^2``)
and ``psi`` the penalty of the mixing prior. Step functions take and return
plain arrays (``S`` is ``n x T``, ``A`` is ``m x n``) and return ``(S, A)``.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.linalg import solveh_banded

from ..errors import (
    DimensionError,
    DivisionGuardError,
    DomainError,
    NumericError,
    SingularSystemError,
    UnsupportedLawError,
)
from ..priors import (
    LawFamily,
    MixingPrior,
    PriorKind,
    SourceLaw,
    SpatialPriorSpec,
    TemporalPriorSpec,
    build_spatial_D,
    default_weights,
    log_density,
    mixing_penalty,
    mixing_prior_gradient,
    parse_enum,
    score_phi,
)
from .config import FROBENIUS, GAUSS_UNIT, HyperParams

GAMMA_FLOOR = 1e-12
MAX_HALVINGS = 30


def _mat(obj) -> np.ndarray:
    arr = np.asarray(getattr(obj, "data", obj), dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def _check_shapes(A, S, X):
    if A.shape[1] != S.shape[0]:
        raise DimensionError(f"A has {A.shape[1]} columns but S has {S.shape[0]} rows")
    if A.shape[0] != X.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but X has {X.shape[0]} sensors")
    if S.shape[1] != X.shape[1]:
        raise DimensionError(f"S has {S.shape[1]} samples but X has {X.shape[1]}")


def solve_system(M, B) -> np.ndarray:
    """Solve ``M Z = B``; raise :class:`SingularSystemError` on (near) singular ``M``."""
    if not np.all(np.isfinite(M)):
        raise SingularSystemError("non-finite normal matrix")
    if np.linalg.cond(M) > 1e14:
        raise SingularSystemError(f"normal matrix is singular to working precision (cond={np.linalg.cond(M):.3g})")
    try:
        return np.linalg.solve(M, B)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by cond above
        raise SingularSystemError(str(exc)) from None


def ridge_sources(A, X, lam: float, R=None) -> np.ndarray:
    """``(A^t A + lam R)^{-1} A^t X`` with ``R = I`` by default."""
    A = _mat(A)
    n = A.shape[1]
    R = np.eye(n) if R is None else R
    return solve_system(A.T @ A + lam * R, A.T @ _mat(X))


# --- criterion and gradients ---------------------------------------------------

def source_penalty(law: SourceLaw, S) -> float:
    """``phi(S) = -2 sum log p(s)``; support violations raise NumericError."""
    S = _mat(S)
    try:
        return float(-2.0 * np.sum(log_density(law, S)))
    except DomainError as exc:
        bad = np.flatnonzero(np.any(~(S > 0), axis=0)) if law.positive_support else np.array([], int)
        idx = int(bad[0]) if bad.size else None
        raise NumericError(f"source law support violated: {exc}", sample_index=idx) from None


def _source_score(law: SourceLaw, S) -> np.ndarray:
    try:
        G = np.asarray(score_phi(law, S))
    except DomainError as exc:
        bad = np.flatnonzero(np.any(~(S > 0), axis=0)) if law.positive_support else np.array([], int)
        idx = int(bad[0]) if bad.size else None
        raise NumericError(f"source law support violated: {exc}", sample_index=idx) from None
    if not np.all(np.isfinite(G)):
        bad = np.flatnonzero(np.any(~np.isfinite(G), axis=0))
        raise NumericError(f"non-finite score at sample {bad[0]}", sample_index=int(bad[0]))
    return G


def joint_criterion(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS) -> float:
    """``sum_t ||x - A s||^2 + lam phi(S) + mu psi(A)``."""
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    fit = float(np.sum((X - A @ S) ** 2))
    src = hyper.lam * source_penalty(law, S) if hyper.lam else 0.0
    mix = hyper.mu * mixing_penalty(prior, A) if hyper.mu else 0.0
    return fit + src + mix


def joint_gradients(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS):
    """Return ``(dJ/dS, dJ/dA)``.

    ``dJ/dS = -2 A^t (X - A S) + 2 lam phi_law(S)`` and
    ``dJ/dA = -2 (X - A S) S^t + mu psi'(A)``.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    R = X - A @ S
    gS = -2.0 * A.T @ R
    if hyper.lam:
        gS = gS + 2.0 * hyper.lam * _source_score(law, S)
    gA = -2.0 * R @ S.T
    if hyper.mu:
        gA = gA + hyper.mu * mixing_prior_gradient(prior, A)
    return gS, gA


def spatial_criterion(A, S, X, hyper: HyperParams, spatial: SpatialPriorSpec) -> float:
    """``sum_t ||x - A s||^2 + lam ||D S||^2 + mu ||A||^2``."""
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    D = build_spatial_D(S.shape[0], spatial.boundary)
    return float(np.sum((X - A @ S) ** 2) + hyper.lam * np.sum((D @ S) ** 2) + hyper.mu * np.sum(A**2))


def temporal_weights(hyper: HyperParams, temporal: TemporalPriorSpec, n: int) -> np.ndarray:
    """Per-source weights ``lam_j = alpha_j sigma_eps^2``."""
    alphas = temporal.as_array()
    if alphas.size != n:
        raise DimensionError(f"{alphas.size} temporal weights for {n} sources")
    return alphas * hyper.noise_var


def temporal_criterion(A, S, X, hyper: HyperParams, temporal: TemporalPriorSpec) -> float:
    """``sum_t ||x - A s||^2 + lam ||S||^2 + sum_j lam_j sum_t (s_j(t) - s_j(t-1))^2 + mu ||A||^2``."""
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    lj = temporal_weights(hyper, temporal, S.shape[0])
    smooth = np.sum(lj * np.sum(np.diff(S, axis=1) ** 2, axis=1))
    return float(np.sum((X - A @ S) ** 2) + hyper.lam * np.sum(S**2) + smooth + hyper.mu * np.sum(A**2))


# --- Gaussian closed forms -------------------------------------------------------

class CoordinateVariant(str, enum.Enum):
    PA1 = "pa1"
    PA2 = "pa2"
    WEIGHTED = "weighted"


def coordinate_variant_for(prior: MixingPrior) -> CoordinateVariant:
    mapping = {
        PriorKind.FROBENIUS: CoordinateVariant.PA1,
        PriorKind.IDENTITY_PROXIMITY: CoordinateVariant.PA2,
        PriorKind.WEIGHTED: CoordinateVariant.WEIGHTED,
    }
    if prior.kind not in mapping:
        raise UnsupportedLawError(f"no coordinate-wise closed form for the {prior.kind.value} prior")
    return mapping[prior.kind]


def jmap_coordinate_update(A, S, X, hyper: HyperParams, variant=CoordinateVariant.PA1, weights=None):
    """One coordinate sweep per sample, in time order.

    For every ``t``: each ``s_j`` is set to
    ``sum_i a_ij (x_i - xhat_i) / (lam + ||a_.j||^2)``, then each ``a_ij`` to
    ``s_j (x_i - xhat_i) / (s_j^2 + mu)``, where
    ``xhat_i = sum_{k != j} a_ik s_k`` uses the latest values. The ``pa2``
    variant uses ``s_j^2 - mu`` for off-diagonal entries and the weighted
    variant divides by ``w_ij^2 (s_j^2 + mu)``. ``A`` carries over from one
    sample to the next.

    Raises
    ------
    DivisionGuardError
        If a denominator vanishes; ``sample_index`` is the offending ``t``.
    """
    variant = parse_enum(CoordinateVariant, variant)
    A = _mat(A).copy()
    S = _mat(S).copy()
    X = _mat(X)
    _check_shapes(A, S, X)
    m, n = A.shape
    lam, mu = hyper.lam, hyper.mu
    if variant is CoordinateVariant.WEIGHTED:
        W2 = (default_weights(m, n) if weights is None else np.asarray(weights, dtype=np.float64)) ** 2
        if W2.shape != (m, n):
            raise DimensionError(f"weights have shape {W2.shape}, expected {(m, n)}")
    for t in range(X.shape[1]):
        x = X[:, t]
        s = S[:, t]
        for j in range(n):
            r = x - A @ s + A[:, j] * s[j]
            den = lam + A[:, j] @ A[:, j]
            if den == 0.0:
                raise DivisionGuardError(f"zero denominator for source {j} at sample {t}", sample_index=t)
            s[j] = A[:, j] @ r / den
        for i in range(m):
            for j in range(n):
                r_i = x[i] - A[i] @ s + A[i, j] * s[j]
                den = s[j] ** 2 + mu
                if variant is CoordinateVariant.PA2 and i != j:
                    den = s[j] ** 2 - mu
                elif variant is CoordinateVariant.WEIGHTED:
                    den = W2[i, j] * den
                if den == 0.0:
                    raise DivisionGuardError(f"zero denominator for a[{i},{j}] at sample {t}", sample_index=t)
                A[i, j] = s[j] * r_i / den
        S[:, t] = s
    return S, A


def rank_one_A_update(x, s, mu: float) -> np.ndarray:
    """Single-sample ``x s^t (s s^t + mu I)^{-1}`` via ``(x s^t / mu)[I - s s^t / (s^t s + mu)]``."""
    x = np.ravel(np.asarray(x, dtype=np.float64))
    s = np.ravel(np.asarray(s, dtype=np.float64))
    if mu == 0:
        raise DivisionGuardError("rank-one form needs mu > 0")
    return np.outer(x, s) / mu @ (np.eye(s.size) - np.outer(s, s) / (s @ s + mu))


def block_A_update(S, X, mu: float) -> np.ndarray:
    """Batch normal equations ``A = (X S^t)(S S^t + mu I)^{-1}``."""
    S, X = _mat(S), _mat(X)
    n = S.shape[0]
    # A M = X S^t with M symmetric  <=>  M A^t = S X^t
    return solve_system(S @ S.T + mu * np.eye(n), S @ X.T).T


def _sequential_per_sample(A, X, hyper, R):
    """Alternate a source ridge step and a rank-one mixing step sample by sample."""
    A = A.copy()
    S = np.empty((A.shape[1], X.shape[1]))
    for t in range(X.shape[1]):
        s = solve_system(A.T @ A + hyper.lam * R, A.T @ X[:, t])
        S[:, t] = s
        A = rank_one_A_update(X[:, t], s, hyper.mu)
    return S, A


def jmap_block_update(A, S, X, hyper: HyperParams, per_sample: bool = False):
    """Source ridge step followed by the mixing step.

    ``S = (A^t A + lam I)^{-1} A^t X`` then ``A = (X S^t)(S S^t + mu I)^{-1}``.
    With ``per_sample=True`` the two single-sample updates alternate along
    the time axis instead, the mixing step using its rank-one form.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    n = A.shape[1]
    if per_sample:
        return _sequential_per_sample(A, X, hyper, np.eye(n))
    S_new = ridge_sources(A, X, hyper.lam)
    return S_new, block_A_update(S_new, X, hyper.mu)


def jmap_spatial_block_update(A, S, X, hyper: HyperParams, spatial: SpatialPriorSpec, per_sample: bool = False):
    """As :func:`jmap_block_update` with ``lam I`` replaced by ``lam D^t D``."""
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    D = build_spatial_D(A.shape[1], spatial.boundary)
    if per_sample:
        return _sequential_per_sample(A, X, hyper, D.T @ D)
    S_new = ridge_sources(A, X, hyper.lam, D.T @ D)
    return S_new, block_A_update(S_new, X, hyper.mu)


def temporal_recursion_sources(A, X, lam: float, lam_j) -> np.ndarray:
    """Forward recursion ``s(t) = (A^t A + lam I)^{-1} [diag(lam_j) s(t-1) + A^t x(t)]``, ``s(0) = 0``."""
    A, X = _mat(A), _mat(X)
    n = A.shape[1]
    M = A.T @ A + lam * np.eye(n)
    Minv = solve_system(M, np.eye(n))
    AtX = A.T @ X
    S = np.empty((n, X.shape[1]))
    prev = np.zeros(n)
    for t in range(X.shape[1]):
        prev = Minv @ (lam_j * prev + AtX[:, t])
        S[:, t] = prev
    return S


def temporal_smoother_sources(A, X, lam: float, lam_j) -> np.ndarray:
    """Exact minimizer over the whole block of
    ``sum_t ||x - A s||^2 + lam ||S||^2 + sum_j lam_j sum_t (s_j(t) - s_j(t-1))^2``.

    The normal equations are block tridiagonal in time; they are solved as a
    banded symmetric positive definite system.
    """
    A, X = _mat(A), _mat(X)
    n, T = A.shape[1], X.shape[1]
    lam_j = np.asarray(lam_j, dtype=np.float64)
    M = A.T @ A + lam * np.eye(n)
    if T == 1 or not np.any(lam_j):
        return solve_system(M, A.T @ X)
    N = n * T
    ab = np.zeros((n + 1, N))  # upper banded storage: ab[n + i - j, j] = K[i, j]
    deg = np.full(T, 2.0)
    deg[0] = deg[-1] = 1.0
    for t in range(T):
        blk = M + np.diag(deg[t] * lam_j)
        for i in range(n):
            for j in range(i, n):
                ab[n + i - j, t * n + j] = blk[i, j]
    # coupling -lam_j between s_j(t) and s_j(t+1): offset n
    ab[0, n:] = -np.tile(lam_j, T - 1)
    rhs = (A.T @ X).T.ravel()
    try:
        z = solveh_banded(ab, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError("temporal normal equations are not positive definite") from None
    return z.reshape(T, n).T


def jmap_temporal_update(A, S, X, hyper: HyperParams, temporal: TemporalPriorSpec, method: str = "recursion"):
    """Temporally smoothed source step followed by the batch mixing step.

    ``method="recursion"`` runs the forward recursion with ``s(0) = 0``;
    ``method="smoother"`` solves for the whole block jointly, which is the exact
    minimizer of :func:`temporal_criterion` in ``S``.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    lam_j = temporal_weights(hyper, temporal, A.shape[1])
    if method == "recursion":
        S_new = temporal_recursion_sources(A, X, hyper.lam, lam_j)
    elif method == "smoother":
        S_new = temporal_smoother_sources(A, X, hyper.lam, lam_j)
    else:
        raise DomainError(f"unknown temporal method {method!r}")
    return S_new, block_A_update(S_new, X, hyper.mu)


# --- general laws: gradient and fixed point ------------------------------------------

def _project(law: SourceLaw, S):
    return np.maximum(S, GAMMA_FLOOR) if law.positive_support else S


def _safe_criterion(A, S, X, hyper, law, prior):
    try:
        return joint_criterion(A, S, X, hyper, law, prior)
    except NumericError:
        return np.inf


def jmap_gradient_step(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS,
                       backtracking: bool = True):
    """Simultaneous descent step ``S - alpha dJ/dS``, ``A - beta dJ/dA``.

    With ``backtracking`` both steps are halved (at most 30 times) until the
    criterion does not increase; if no such step exists the inputs are
    returned unchanged. Positive-support laws are projected to ``>= 1e-12``.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    gS, gA = joint_gradients(A, S, X, hyper, law, prior)
    a, b = hyper.alpha_step, hyper.beta_step
    if not backtracking:
        return _project(law, S - a * gS), A - b * gA
    J0 = joint_criterion(A, S, X, hyper, law, prior)
    for _ in range(MAX_HALVINGS + 1):
        S_new, A_new = _project(law, S - a * gS), A - b * gA
        if _safe_criterion(A_new, S_new, X, hyper, law, prior) <= J0:
            return S_new, A_new
        a, b = a / 2, b / 2
    return S.copy(), A.copy()


def _bisect_newton(f, fprime, y, lo, hi, iters=60):
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = f(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    z = 0.5 * (lo + hi)
    for _ in range(3):
        d = fprime(z)
        z = np.where(d > 0, z - (f(z) - y) / np.where(d > 0, d, 1.0), z)
    return z


def invert_score(law: SourceLaw, y) -> np.ndarray:
    """Solve ``phi_law(z) = y`` elementwise for laws with a strictly increasing score.

    Supported: gauss, subgaussian, gaussmixture with ``|alpha| < 1`` and gamma
    (values ``y >= beta`` have no preimage and are mapped to a very large ``z``).
    """
    y = np.asarray(y, dtype=np.float64)
    a, b = law.alpha, law.beta
    fam = law.family
    if fam is LawFamily.GAUSS:
        return y / (2.0 * a)
    if fam is LawFamily.SUBGAUSSIAN:
        return _bisect_newton(lambda z: z + 2.0 * np.tanh(z), lambda z: 1.0 + 2.0 / np.cosh(z) ** 2,
                              y, -np.abs(y), np.abs(y))
    if fam is LawFamily.GAUSSMIXTURE and abs(a) < 1:
        return _bisect_newton(lambda z: z - a * np.tanh(a * z), lambda z: 1.0 - a**2 / np.cosh(a * z) ** 2,
                              y, y - abs(a), y + abs(a))
    if fam is LawFamily.GAMMA:
        gap = np.maximum(b - y, 1e-9 * max(1.0, abs(b)))
        return a / gap
    raise UnsupportedLawError(
        f"fixed-point update needs an invertible score; {fam.value} (alpha={a}) does not qualify"
    )


def invert_prior_gradient(prior: MixingPrior, G, shape) -> np.ndarray:
    """Solve ``psi'(A) = G`` for priors whose gradient is affine and invertible."""
    kind = prior.kind
    if kind is PriorKind.FROBENIUS:
        return G / 2.0
    if kind is PriorKind.IDENTITY_PROXIMITY:
        if shape[0] != shape[1]:
            raise DimensionError("identity-proximity prior needs a square matrix")
        return np.eye(shape[0]) + G / 2.0
    if kind is PriorKind.WEIGHTED:
        return G / (2.0 * prior.weight_matrix(shape) ** 2)
    raise UnsupportedLawError(f"fixed-point update cannot invert the gradient of the {kind.value} prior")


def fixed_point_map(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS):
    """Targets of the implicit stationarity equations, right-hand sides at the current iterate.

    ``phi_law(S') = (1/lam) A^t (X - A S)`` and ``psi'(A') = (2/mu) (X - A S) S^t``.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    _check_shapes(A, S, X)
    if not (hyper.lam > 0 and hyper.mu > 0):
        raise DomainError("fixed-point update needs lam > 0 and mu > 0")
    R = X - A @ S
    S_t = invert_score(law, A.T @ R / hyper.lam)
    A_t = invert_prior_gradient(prior, 2.0 * R @ S.T / hyper.mu, A.shape)
    return _project(law, S_t), A_t


def fixed_point_residuals(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS):
    """Max-abs residuals of both stationarity equations at ``(A, S)``."""
    A, S, X = _mat(A), _mat(S), _mat(X)
    R = X - A @ S
    rs = _source_score(law, S) - A.T @ R / hyper.lam
    ra = mixing_prior_gradient(prior, A) - 2.0 * R @ S.T / hyper.mu
    return float(np.max(np.abs(rs))), float(np.max(np.abs(ra)))


def jmap_fixed_point_step(A, S, X, hyper: HyperParams, law: SourceLaw = GAUSS_UNIT, prior: MixingPrior = FROBENIUS,
                          relaxation: float = 1.0, backtracking: bool = False):
    """Move toward the fixed-point targets: ``(S, A) + w * (targets - (S, A))``.

    ``relaxation=1`` is the plain fixed-point step. With ``backtracking`` the
    relaxation is halved (at most 30 times) until the criterion does not
    increase; the inputs are returned if no such step exists.
    """
    A, S, X = _mat(A), _mat(S), _mat(X)
    S_t, A_t = fixed_point_map(A, S, X, hyper, law, prior)
    w = relaxation
    if not backtracking:
        return S + w * (S_t - S), A + w * (A_t - A)
    J0 = joint_criterion(A, S, X, hyper, law, prior)
    for _ in range(MAX_HALVINGS + 1):
        S_new, A_new = _project(law, S + w * (S_t - S)), A + w * (A_t - A)
        if _safe_criterion(A_new, S_new, X, hyper, law, prior) <= J0:
            return S_new, A_new
        w /= 2
    return S.copy(), A.copy()
