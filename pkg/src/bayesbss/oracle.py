"""Brute-force reference implementations.

These validators are written with plain Python loops and floats (Gaussian
elimination, explicit stencils, trapezoid sums). They deliberately share no
code with the estimators so that agreement between the two is evidence of
correctness. They are meant for dense, small problems only (dimensions up to
6, a few thousand samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

MAX_DENSE_DIM = 6


@dataclass(frozen=True)
class DiffSpec:
    """Finite-difference step; only the central scheme is provided."""

    h: float = 1e-6
    scheme: str = "central"

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("finite-difference step must be positive")
        if self.scheme != "central":
            raise DomainError("only the central scheme is available")


def finite_diff_gradient(f, x0, spec: DiffSpec = DiffSpec()):
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    ``x0`` may have any shape; the result has the same shape.
    """
    x0 = np.array(x0, dtype=np.float64)
    flat = x0.ravel()
    grad = np.empty(flat.size)
    h = spec.h
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp.reshape(x0.shape)))
        fm = float(f(xm.reshape(x0.shape)))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"non-finite function value near coordinate {i}", sample_index=i)
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x0.shape)


def finite_diff_hessian(grad_f, x0, spec: DiffSpec = DiffSpec()):
    """Jacobian of a vector-valued gradient by central differences (``n x n``)."""
    x0 = np.array(x0, dtype=np.float64).ravel()
    n = x0.size
    H = np.empty((n, n))
    for i in range(n):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += spec.h
        xm[i] -= spec.h
        H[:, i] = (np.ravel(grad_f(xp)) - np.ravel(grad_f(xm))) / (2.0 * spec.h)
    return H


# --- dense linear algebra by hand -------------------------------------------

def _to_lists(M):
    return [[float(v) for v in row] for row in np.atleast_2d(np.asarray(M, dtype=np.float64))]


def _eliminate(M, rhs=None):
    """Gaussian elimination with partial pivoting. Returns (det, solution)."""
    n = len(M)
    a = [row[:] for row in M]
    b = [v for v in rhs] if rhs is not None else None
    det = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0.0:
            return 0.0, None
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            if b is not None:
                b[col], b[piv] = b[piv], b[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            factor = a[r][col] / a[col][col]
            if factor != 0.0:
                for c in range(col, n):
                    a[r][c] -= factor * a[col][c]
                if b is not None:
                    b[r] -= factor * b[col]
    if b is None:
        return det, None
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, n):
            acc -= a[r][c] * x[c]
        x[r] = acc / a[r][r]
    return det, x


def loop_det(M) -> float:
    return _eliminate(_to_lists(M))[0]


def loop_solve(M, b):
    det, x = _eliminate(_to_lists(M), [float(v) for v in np.ravel(b)])
    if x is None:
        raise NumericError("singular system in oracle solve")
    return np.array(x)


def loop_matmul(A, B):
    A, B = _to_lists(A), _to_lists(B)
    out = [[0.0] * len(B[0]) for _ in A]
    for i in range(len(A)):
        for j in range(len(B[0])):
            acc = 0.0
            for k in range(len(B)):
                acc += A[i][k] * B[k][j]
            out[i][j] = acc
    return np.array(out)


def cramer_solve_2x2(M, b):
    """Solve a 2x2 system by Cramer's rule."""
    (a, c), (d, e) = _to_lists(M)
    b0, b1 = (float(v) for v in np.ravel(b))
    det = a * e - c * d
    if det == 0.0:
        raise NumericError("singular 2x2 system")
    return np.array([(b0 * e - c * b1) / det, (a * b1 - b0 * d) / det])


def _check_dense(*dims):
    if max(dims) > MAX_DENSE_DIM:
        raise DomainError(f"oracle restricted to dimensions <= {MAX_DENSE_DIM}")


# --- Gaussian marginals -------------------------------------------------------

def mvn_logpdf(x, C) -> float:
    """Exact ``log N(x; 0, C)`` by elimination."""
    x = [float(v) for v in np.ravel(x)]
    m = len(x)
    det, y = _eliminate(_to_lists(C), x)
    if y is None or det <= 0.0:
        raise NumericError("covariance is singular or not positive definite")
    quad = sum(xi * yi for xi, yi in zip(x, y))
    return -0.5 * m * math.log(2.0 * math.pi) - 0.5 * math.log(det) - 0.5 * quad


def dense_gaussian_marginal(A, x, hyper) -> float:
    """``log N(x; 0, sigma_s^2 A A^t + sigma_eps^2 I)`` with ``sigma_s^2 = sigma_eps^2 / lam``.

    ``hyper`` needs ``lam`` and ``sigma_eps`` attributes.
    """
    A = _to_lists(getattr(A, "data", A))
    m, n = len(A), len(A[0])
    _check_dense(m, n)
    s2 = hyper.sigma_eps**2
    vs = s2 / hyper.lam
    C = [[0.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += A[i][k] * A[j][k]
            C[i][j] = vs * acc + (s2 if i == j else 0.0)
    return mvn_logpdf(x, C)


def dense_blocktoeplitz_S(s, m: int) -> np.ndarray:
    """``m x mn`` matrix with ``s^t`` on its block diagonal, so ``S a = A s``
    for ``a`` the row-stacked entries of ``A``."""
    s = [float(v) for v in np.ravel(s)]
    n = len(s)
    _check_dense(m, n)
    S = [[0.0] * (m * n) for _ in range(m)]
    for i in range(m):
        for j in range(n):
            S[i][i * n + j] = s[j]
    return np.array(S)


def dense_marginal_s_logpdf(s, x, hyper) -> float:
    """Log-density of ``s`` given ``x`` with ``A`` integrated out (dense construction).

    ``a ~ N(0, (sigma_eps^2/mu) I)`` and ``s ~ N(0, (sigma_eps^2/lam) I)`` give
    ``log N(x; 0, (sigma_eps^2/mu) S S^t + sigma_eps^2 I) - lam ||s||^2 / (2 sigma_eps^2)``.
    """
    x = [float(v) for v in np.ravel(x)]
    m = len(x)
    S = _to_lists(dense_blocktoeplitz_S(s, m))
    s2 = hyper.sigma_eps**2
    va = s2 / hyper.mu
    C = [[0.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(len(S[0])):
                acc += S[i][k] * S[j][k]
            C[i][j] = va * acc + (s2 if i == j else 0.0)
    ss = sum(float(v) ** 2 for v in np.ravel(s))
    return mvn_logpdf(x, C) - hyper.lam * ss / (2.0 * s2)


# --- scalar re-implementations of the estimators --------------------------------

def loop_joint_criterion(A, S, X, lam, mu, source_penalty=None, prior_penalty=None) -> float:
    """Loop evaluation of ``sum_t ||x - A s||^2 + lam sum phi(s) + mu psi(A)``.

    The default penalties are the Gaussian ones, ``phi(s) = s^2`` per entry and
    ``psi(A) = ||A||^2``; either can be replaced by a scalar callable
    (``source_penalty(value)`` per entry, ``prior_penalty(A_lists)``).
    """
    A, S, X = _to_lists(A), _to_lists(S), _to_lists(X)
    m, n, T = len(A), len(A[0]), len(S[0])
    total = 0.0
    for t in range(T):
        for i in range(m):
            r = X[i][t]
            for j in range(n):
                r -= A[i][j] * S[j][t]
            total += r * r
        for j in range(n):
            v = S[j][t]
            total += lam * (v * v if source_penalty is None else source_penalty(v))
    if prior_penalty is None:
        total += mu * sum(a * a for row in A for a in row)
    else:
        total += mu * prior_penalty(A)
    return total


def scalar_sol0_sweep(A, s, x, lam, mu):
    """One coordinate sweep (sources then mixing entries) for a single sample."""
    A = _to_lists(A)
    s = [float(v) for v in np.ravel(s)]
    x = [float(v) for v in np.ravel(x)]
    m, n = len(A), len(A[0])

    def xhat(i, j):
        return sum(A[i][k] * s[k] for k in range(n) if k != j)

    for j in range(n):
        num = sum(A[i][j] * (x[i] - xhat(i, j)) for i in range(m))
        den = lam + sum(A[i][j] ** 2 for i in range(m))
        s[j] = num / den
    for i in range(m):
        for j in range(n):
            A[i][j] = s[j] * (x[i] - xhat(i, j)) / (s[j] ** 2 + mu)
    return np.array(s), np.array(A)


def scalar_temporal_recursion(a, x, lam, lam1):
    """1x1 forward recursion ``s(t) = (lam1 s(t-1) + a x(t)) / (a^2 + lam)``, ``s(0) = 0``."""
    out = []
    prev = 0.0
    for xt in x:
        prev = (lam1 * prev + a * float(xt)) / (a * a + lam)
        out.append(prev)
    return np.array(out)


def stencil_second_difference(s, boundary="truncate"):
    """``2 s_j - s_{j-1} - s_{j+1}``; a missing neighbour is 0 (truncate)
    or the point itself (reflect)."""
    s = [float(v) for v in np.ravel(s)]
    n = len(s)
    out = []
    for j in range(n):
        if j > 0:
            left = s[j - 1]
        else:
            left = s[j] if boundary == "reflect" else 0.0
        if j < n - 1:
            right = s[j + 1]
        else:
            right = s[j] if boundary == "reflect" else 0.0
        out.append(2.0 * s[j] - left - right)
    return np.array(out)


def loop_temporal_penalty(S, alphas) -> float:
    S = _to_lists(S)
    total = 0.0
    for j, row in enumerate(S):
        for t in range(1, len(row)):
            total += float(alphas[j]) * (row[t] - row[t - 1]) ** 2
    return total


def trapezoid(f, a: float, b: float, n: int = 20001) -> float:
    """Composite trapezoid rule on ``n`` equally spaced nodes."""
    h = (b - a) / (n - 1)
    total = 0.5 * (f(a) + f(b))
    for k in range(1, n - 1):
        total += f(a + k * h)
    return total * h


def loop_amari(G) -> float:
    G = [[abs(v) for v in row] for row in _to_lists(G)]
    n = len(G)
    if n == 1:
        return 0.0
    total = 0.0
    for i in range(n):
        total += sum(G[i]) / max(G[i]) - 1.0
    for j in range(n):
        col = [G[i][j] for i in range(n)]
        total += sum(col) / max(col) - 1.0
    return total / (2.0 * n * (n - 1))
