"""Self-validation suite comparing the library against the brute-force oracles.

Each check is a function ``check(paper_table: bool) -> (passed, detail)``;
``CHECKS`` maps names to checks in a fixed order.
"""

from __future__ import annotations

import time
from collections import OrderedDict

import numpy as np

from . import oracle
from .estimators.config import HyperParams
from .estimators.jmap import rank_one_A_update
from .estimators.marginal import evidence_gradient, gaussian_evidence_logpdf, marginal_s_logpdf
from .priors import (
    LawFamily,
    MixingPrior,
    PriorKind,
    SourceLaw,
    log_density,
    mixing_penalty,
    mixing_prior_gradient,
    score_phi,
)

# law parameters and sampling intervals for the score checks; the Laplace
# points avoid the kink at 0 and the Gamma points stay inside the support
SCORE_CASES = OrderedDict(
    [
        (LawFamily.GAUSS, (SourceLaw(LawFamily.GAUSS, 0.7), (-10.0, 10.0))),
        (LawFamily.LAPLACE, (SourceLaw(LawFamily.LAPLACE, 2.0), (-10.0, 10.0))),
        (LawFamily.CAUCHY, (SourceLaw(LawFamily.CAUCHY, 1.5), (-10.0, 10.0))),
        (LawFamily.GAMMA, (SourceLaw(LawFamily.GAMMA, 2.0, 1.5), (0.1, 10.0))),
        (LawFamily.SUBGAUSSIAN, (SourceLaw(LawFamily.SUBGAUSSIAN), (-10.0, 10.0))),
        (LawFamily.GAUSSMIXTURE, (SourceLaw(LawFamily.GAUSSMIXTURE, 2.0), (-10.0, 10.0))),
    ]
)

SCORE_H = 1e-5
SCORE_RTOL = 1e-6


def score_points(law: SourceLaw, interval, count=1000, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.uniform(*interval, size=count)
    if law.family is LawFamily.LAPLACE:
        z = np.where(np.abs(z) < 10 * SCORE_H, z + np.sign(z + 1e-300) * 0.1, z)
    return z


def score_fd_error(law: SourceLaw, z, paper_table=False):
    """Max of ``|phi - fd| / (1 + |phi|)`` with central differences of ``-log p``."""
    phi = np.asarray(score_phi(law, z, paper_table=paper_table))
    fd = -(np.asarray(log_density(law, z + SCORE_H)) - np.asarray(log_density(law, z - SCORE_H))) / (2 * SCORE_H)
    return float(np.max(np.abs(phi - fd) / (1.0 + np.abs(phi))))


def _score_check(family):
    law, interval = SCORE_CASES[family]

    def check(paper_table=False):
        err = score_fd_error(law, score_points(law, interval), paper_table)
        return err <= SCORE_RTOL, f"max scaled error {err:.2e} over 1000 points (tol {SCORE_RTOL:g})"

    check.__doc__ = f"{family.value} score matches finite differences of -log p"
    return check


def _random_hyper(rng):
    return HyperParams(lam=float(rng.uniform(0.05, 2.0)), mu=float(rng.uniform(0.05, 2.0)),
                       sigma_eps=float(rng.uniform(0.2, 2.0)))


def check_evidence(paper_table=False):
    """Gaussian evidence equals the dense covariance marginal (200 instances)."""
    rng = np.random.default_rng(1)
    flat = MixingPrior(PriorKind.UNIFORM)
    worst = 0.0
    for _ in range(200):
        m, n = rng.integers(1, 4, size=2)
        A = rng.standard_normal((m, n))
        x = rng.standard_normal(m)
        h = _random_hyper(rng)
        worst = max(worst, abs(gaussian_evidence_logpdf(A, x, h, flat) - oracle.dense_gaussian_marginal(A, x, h)))
    return worst <= 1e-8, f"max abs difference {worst:.2e} (tol 1e-8)"


def check_evidence_gradient(paper_table=False):
    """Evidence gradient in A matches finite differences (50 instances)."""
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        m, n = rng.integers(1, 4, size=2)
        A = rng.standard_normal((m, n))
        X = rng.standard_normal((m, 4))
        h = _random_hyper(rng)
        g = evidence_gradient(A, X, h)
        fd = oracle.finite_diff_gradient(lambda B: gaussian_evidence_logpdf(B, X, h), A)
        worst = max(worst, float(np.max(np.abs(g - fd)) / (1.0 + np.max(np.abs(fd)))))
    return worst <= 1e-5, f"max relative error {worst:.2e} (tol 1e-5)"


def check_prior_gradients(paper_table=False):
    """All five non-uniform prior gradients match finite differences (100 matrices each)."""
    rng = np.random.default_rng(3)
    worst = 0.0
    for kind in (PriorKind.FROBENIUS, PriorKind.IDENTITY_PROXIMITY, PriorKind.ROW_ORTHONORMAL,
                 PriorKind.COL_ORTHONORMAL, PriorKind.WEIGHTED):
        prior = MixingPrior(kind)
        for _ in range(100):
            m = int(rng.integers(1, 4))
            n = m if kind is PriorKind.IDENTITY_PROXIMITY else int(rng.integers(1, 4))
            A = rng.standard_normal((m, n))
            g = mixing_prior_gradient(prior, A)
            fd = oracle.finite_diff_gradient(lambda B: mixing_penalty(prior, B), A)
            worst = max(worst, float(np.max(np.abs(g - fd)) / (1.0 + np.max(np.abs(fd)))))
    return worst <= 1e-6, f"max relative error {worst:.2e} (tol 1e-6)"


def check_rank_one(paper_table=False):
    """Rank-one mixing update equals the direct inverse (100 samples)."""
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        m, n = rng.integers(1, 5, size=2)
        x, s = rng.standard_normal(m), rng.standard_normal(n)
        mu = float(rng.uniform(0.05, 2.0))
        direct = np.outer(x, s) @ np.linalg.inv(np.outer(s, s) + mu * np.eye(n))
        worst = max(worst, float(np.max(np.abs(rank_one_A_update(x, s, mu) - direct))))
    return worst <= 1e-10, f"max abs difference {worst:.2e} (tol 1e-10)"


def check_block_toeplitz(paper_table=False):
    """S a == A s and det(S^t S + mu I) == det(s s^t + mu I)^m (100 instances)."""
    rng = np.random.default_rng(5)
    prod_err = det_err = 0.0
    for _ in range(100):
        m, n = rng.integers(1, 4, size=2)
        A = rng.standard_normal((m, n))
        s = rng.standard_normal(n)
        mu = float(rng.uniform(0.05, 2.0))
        S = oracle.dense_blocktoeplitz_S(s, m)
        prod_err = max(prod_err, float(np.max(np.abs(S @ A.ravel() - A @ s))))
        big = oracle.loop_det(S.T @ S + mu * np.eye(m * n))
        small = oracle.loop_det(np.outer(s, s) + mu * np.eye(n)) ** m
        det_err = max(det_err, abs(big - small) / abs(small))
    ok = prod_err <= 1e-12 and det_err <= 1e-8
    return ok, f"product error {prod_err:.2e} (tol 1e-12), det relative error {det_err:.2e} (tol 1e-8)"


def check_marginal_s(paper_table=False):
    """Structured marginal of s equals the dense block-matrix construction (100 instances)."""
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        m, n = rng.integers(1, 4, size=2)
        s, x = rng.standard_normal(n), rng.standard_normal(m)
        h = _random_hyper(rng)
        worst = max(worst, abs(marginal_s_logpdf(s, x, h) - oracle.dense_marginal_s_logpdf(s, x, h)))
    return worst <= 1e-10, f"max abs difference {worst:.2e} (tol 1e-10)"


CHECKS = OrderedDict()
for _family in SCORE_CASES:
    CHECKS[f"score-{_family.value}"] = _score_check(_family)
CHECKS["evidence-dense"] = check_evidence
CHECKS["evidence-gradient"] = check_evidence_gradient
CHECKS["prior-gradients"] = check_prior_gradients
CHECKS["rank-one-update"] = check_rank_one
CHECKS["block-toeplitz"] = check_block_toeplitz
CHECKS["marginal-s-dense"] = check_marginal_s


def run_checks(paper_table=False, names=None):
    """Run the selected checks; returns a list of ``(name, passed, detail, seconds)``."""
    results = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(paper_table=paper_table)
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(passed), detail, time.perf_counter() - t0))
    return results
