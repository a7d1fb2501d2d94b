import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayesbss.errors import DimensionError, NumericError
from bayesbss.estimators import ml_negative_loglik, ml_relative_gradient_step, whiteness_constrained_H
from bayesbss.priors import SourceLaw, score_phi

GAUSS_IDENTITY_SCORE = SourceLaw("gauss", 0.5)  # phi(z) = z


def _exactly_white(rng, n, T):
    Y = rng.standard_normal((n, T))
    Y -= Y.mean(axis=1, keepdims=True)
    L = np.linalg.cholesky(Y @ Y.T / T)
    return np.linalg.solve(L, Y)


class TestRelativeGradient:
    def test_stationary_batch_is_fixed(self, rng):
        Y = _exactly_white(rng, 3, 200)
        B = np.eye(3)
        np.testing.assert_allclose(ml_relative_gradient_step(B, Y, GAUSS_IDENTITY_SCORE, 0.5), B, atol=1e-12)

    def test_white_data_small_update(self):
        T = 4000
        X = np.random.default_rng(11).standard_normal((2, T))
        B1 = ml_relative_gradient_step(np.eye(2), X, GAUSS_IDENTITY_SCORE, 1.0)
        assert np.linalg.norm(B1 - np.eye(2)) <= 3 / np.sqrt(T)

    def test_single_sample_laplace(self):
        x = np.array([[1.0], [0.0]])
        law = SourceLaw("laplace", 1.0)
        B1 = ml_relative_gradient_step(np.eye(2), x, law, 0.1)
        # scalar evaluation: y = x, sign(y) y^t - I = [[1, 0], [0, 0]] - I
        expected = [[1.0 - 0.1 * (1.0 - 1.0), 0.0], [0.0, 1.0 - 0.1 * (0.0 - 1.0)]]
        np.testing.assert_allclose(B1, expected, atol=1e-15)

    def test_general_against_loop(self, rng):
        law = SourceLaw("cauchy", 1.3)
        B = rng.standard_normal((2, 2))
        X = rng.standard_normal((2, 7))
        H = np.zeros((2, 2))
        for t in range(7):
            y = B @ X[:, t]
            phi = np.array([score_phi(law, float(v)) for v in y])
            H += np.outer(phi, y) - np.eye(2)
        np.testing.assert_allclose(ml_relative_gradient_step(B, X, law, 0.3), B - 0.3 * H / 7, atol=1e-13)

    def test_natural_form(self, rng):
        law = SourceLaw("subgaussian")
        B = rng.standard_normal((2, 2))
        X = rng.standard_normal((2, 9))
        plain = ml_relative_gradient_step(B, X, law, 0.2)
        natural = ml_relative_gradient_step(B, X, law, 0.2, natural=True)
        H = (B - plain) / 0.2
        np.testing.assert_allclose(natural, B - 0.2 * H @ B, atol=1e-13)

    def test_gamma_negative_output_names_sample(self):
        X = np.array([[1.0, 2.0, -1.0], [1.0, 1.0, 1.0]])
        with pytest.raises(NumericError) as info:
            ml_relative_gradient_step(np.eye(2), X, SourceLaw("gamma", 2.0, 1.0), 0.1)
        assert info.value.sample_index == 2

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ml_relative_gradient_step(np.eye(2), np.ones((3, 4)), GAUSS_IDENTITY_SCORE, 0.1)

    @given(st.integers(1, 4), st.integers(5, 60), st.integers(0, 10_000), st.floats(0.01, 2))
    def test_stationarity_property(self, n, T, seed, gamma):
        rng = np.random.default_rng(seed)
        if T <= n:
            T = n + 5
        Y = _exactly_white(rng, n, T)
        B = np.eye(n)
        np.testing.assert_allclose(ml_relative_gradient_step(B, Y, GAUSS_IDENTITY_SCORE, gamma), B, atol=1e-12)


class TestWhiteness:
    def test_zero_for_white_uncorrelated(self, rng):
        Y = _exactly_white(rng, 2, 100)
        np.testing.assert_allclose(whiteness_constrained_H(Y, GAUSS_IDENTITY_SCORE, 1.0, 0.0), 0.0, atol=1e-12)

    def test_whiteness_term(self):
        H = whiteness_constrained_H(np.array([[2.0], [0.0]]), GAUSS_IDENTITY_SCORE, 1.0, 0.0)
        np.testing.assert_array_equal(H, [[3, 0], [0, -1]])

    def test_score_term(self):
        H = whiteness_constrained_H(np.array([[1.0], [1.0]]), GAUSS_IDENTITY_SCORE, 0.0, 1.0)
        np.testing.assert_array_equal(H, 2 * np.ones((2, 2)))

    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
    def test_symmetric(self, seed, alpha, beta):
        Y = np.random.default_rng(seed).standard_normal((3, 10))
        H = whiteness_constrained_H(Y, SourceLaw("cauchy", 1.0), alpha, beta)
        np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_negative_loglik_gauss(rng):
    X = rng.standard_normal((2, 5))
    B = np.diag([2.0, 0.5])
    Y = B @ X
    expected = -np.log(1.0) + np.sum(0.5 * Y**2) / 5
    assert ml_negative_loglik(B, X, GAUSS_IDENTITY_SCORE) == pytest.approx(expected)
    assert ml_negative_loglik(np.zeros((2, 2)), X, GAUSS_IDENTITY_SCORE) == np.inf
