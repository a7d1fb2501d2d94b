import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayesbss import oracle
from bayesbss.errors import DomainError, NumericError
from bayesbss.estimators import HyperParams


def test_fd_quadratic(rng):
    x0 = rng.standard_normal(5)
    np.testing.assert_allclose(oracle.finite_diff_gradient(lambda x: np.sum(x**2), x0), 2 * x0, atol=1e-8)


def test_fd_constant():
    np.testing.assert_array_equal(oracle.finite_diff_gradient(lambda x: 3.0, np.ones((2, 2))), np.zeros((2, 2)))


def test_fd_non_finite():
    with pytest.raises(NumericError):
        oracle.finite_diff_gradient(lambda x: math.log(x[0]) if x[0] > 0 else float("nan"), np.array([0.0]))


def test_fd_hessian(rng):
    M = rng.standard_normal((3, 3))
    M = M + M.T
    H = oracle.finite_diff_hessian(lambda x: M @ x, rng.standard_normal(3))
    np.testing.assert_allclose(H, M, atol=1e-7)


def test_diffspec_validation():
    with pytest.raises(DomainError):
        oracle.DiffSpec(h=0.0)
    with pytest.raises(DomainError):
        oracle.DiffSpec(scheme="forward")


class TestLinearAlgebra:
    def test_det_and_solve(self, rng):
        M = rng.standard_normal((4, 4))
        b = rng.standard_normal(4)
        assert oracle.loop_det(M) == pytest.approx(np.linalg.det(M), rel=1e-10)
        np.testing.assert_allclose(oracle.loop_solve(M, b), np.linalg.solve(M, b), rtol=1e-9)

    def test_cramer(self):
        np.testing.assert_allclose(oracle.cramer_solve_2x2([[2.0, 1.0], [1.0, 3.0]], [3.0, 5.0]), [0.8, 1.4])

    def test_cramer_singular(self):
        with pytest.raises(NumericError):
            oracle.cramer_solve_2x2([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


class TestGaussianMarginal:
    def test_zero_mixing(self, rng):
        h = HyperParams(lam=0.3, mu=0.1, sigma_eps=0.7)
        x = rng.standard_normal(3)
        expected = sum(-0.5 * math.log(2 * math.pi * 0.49) - v * v / (2 * 0.49) for v in x)
        assert oracle.dense_gaussian_marginal(np.zeros((3, 2)), x, h) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 3), st.floats(0.1, 2))
    def test_scalar_formula(self, a, x, lam, sigma):
        h = HyperParams(lam=lam, mu=1.0, sigma_eps=sigma)
        v = sigma**2 / lam * a * a + sigma**2
        expected = -x * x / (2 * v) - 0.5 * math.log(v) - 0.5 * math.log(2 * math.pi)
        assert oracle.dense_gaussian_marginal([[a]], [x], h) == pytest.approx(expected, abs=1e-10)

    def test_scale_guard(self):
        with pytest.raises(DomainError):
            oracle.dense_gaussian_marginal(np.ones((7, 1)), np.ones(7), HyperParams())


class TestBlockToeplitz:
    def test_m1(self):
        np.testing.assert_array_equal(oracle.dense_blocktoeplitz_S([1.0, 2.0, 3.0], 1), [[1, 2, 3]])

    def test_m2_n2(self, rng):
        S = oracle.dense_blocktoeplitz_S([1.0, 2.0], 2)
        np.testing.assert_array_equal(S, [[1, 2, 0, 0], [0, 0, 1, 2]])
        for _ in range(20):
            A = rng.standard_normal((2, 2))
            np.testing.assert_allclose(S @ A.ravel(), A @ np.array([1.0, 2.0]), atol=1e-12)

    @given(st.integers(1, 4), st.integers(1, 4), st.floats(0.05, 3), st.integers(0, 10_000))
    def test_determinant_lemma(self, m, n, mu, seed):
        s = np.random.default_rng(seed).standard_normal(n)
        S = oracle.dense_blocktoeplitz_S(s, m)
        big = oracle.loop_det(S.T @ S + mu * np.eye(m * n))
        small = (mu ** (n - 1) * (mu + s @ s)) ** m
        assert big == pytest.approx(small, rel=1e-8)

    def test_scale_guard(self):
        with pytest.raises(DomainError):
            oracle.dense_blocktoeplitz_S(np.ones(7), 2)


def test_loop_joint_criterion_custom_penalties():
    A = np.eye(2)
    S = np.array([[1.0], [2.0]])
    X = np.array([[1.0], [1.0]])
    value = oracle.loop_joint_criterion(A, S, X, 0.5, 2.0, source_penalty=abs, prior_penalty=lambda M: 1.0)
    assert value == pytest.approx(1.0 + 0.5 * 3.0 + 2.0)


def test_trapezoid():
    assert oracle.trapezoid(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-8)


def test_scalar_recursion():
    np.testing.assert_allclose(oracle.scalar_temporal_recursion(1.0, [1.0, 1.0], 1.0, 1.0), [0.5, 0.75])
