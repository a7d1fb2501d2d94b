import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayesbss import oracle
from bayesbss.errors import DimensionError, DomainError
from bayesbss.metrics import amari_index, best_match, correlation_matrix, histogram, phase_scatter
from bayesbss.signals import generate_sources


@pytest.fixture
def sources():
    return generate_sources("ex2").data


class TestBestMatch:
    def test_identity(self, sources):
        rep = best_match(sources, sources)
        np.testing.assert_allclose(rep.correlations, 1.0, atol=1e-12)
        assert rep.permutation == (0, 1, 2)
        assert rep.signs == (1, 1, 1)

    def test_swapped_and_negated(self):
        S = generate_sources("ex1").data
        rep = best_match(S, -S[::-1])
        np.testing.assert_allclose(rep.correlations, 1.0, atol=1e-12)
        assert rep.permutation == (1, 0)
        assert rep.signs == (-1, -1)

    def test_noise_attenuation(self):
        rng = np.random.default_rng(0)
        S = rng.standard_normal((2, 200_000))
        noisy = S + 0.1 * rng.standard_normal(S.shape)  # SNR 20 dB
        rep = best_match(S, noisy)
        np.testing.assert_allclose(rep.correlations, 1 / np.sqrt(1.01), atol=2e-3)

    def test_zero_variance_named(self, sources):
        est = sources.copy()
        est[1] = 4.0
        with pytest.raises(DomainError, match="estimated channel 1"):
            best_match(sources, est)

    def test_sample_mismatch(self, sources):
        with pytest.raises(DimensionError):
            best_match(sources, sources[:, :10])

    def test_more_estimates_than_sources(self, sources):
        rep = best_match(sources[:2], sources[[2, 1, 0]])
        assert rep.permutation == (2, 1)
        np.testing.assert_allclose(rep.correlations, 1.0, atol=1e-12)

    def test_fewer_estimates_than_sources(self, sources):
        rep = best_match(sources, sources[[2, 0]])
        assert rep.permutation == (1, None, 0)
        assert rep.signs[1] == 0 and rep.correlations[1] == 0.0

    def test_correlations_match_loop(self, sources):
        rng = np.random.default_rng(3)
        est = rng.standard_normal((3, 3)) @ sources
        R = correlation_matrix(sources, est)
        for i in range(3):
            for k in range(3):
                a, b = sources[i], est[k]
                ma, mb = sum(a) / len(a), sum(b) / len(b)
                cov = sum((u - ma) * (v - mb) for u, v in zip(a, b))
                va = sum((u - ma) ** 2 for u in a)
                vb = sum((v - mb) ** 2 for v in b)
                assert R[i, k] == pytest.approx(cov / (va * vb) ** 0.5, abs=1e-12)

    @given(st.permutations([0, 1, 2]), st.lists(st.floats(0.01, 100), min_size=3, max_size=3),
           st.lists(st.sampled_from([-1.0, 1.0]), min_size=3, max_size=3), st.integers(0, 1000))
    def test_ambiguity_invariance(self, perm, scales, signs, seed):
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((3, 64))
        est = S + 0.5 * rng.standard_normal((3, 64))
        base = best_match(S, est)
        transformed = (np.array(scales) * np.array(signs))[:, None] * est[list(perm)]
        rep = best_match(S, transformed)
        np.testing.assert_allclose(rep.correlations, base.correlations, atol=1e-12)

    def test_to_dict(self, sources):
        d = best_match(sources, sources, amari=0.0).to_dict()
        assert d["permutation"] == [0, 1, 2] and d["amari"] == 0.0


class TestAmari:
    def test_permutation(self):
        assert amari_index(np.eye(3)[[2, 0, 1]]) == 0.0

    def test_scaled_diagonal(self):
        assert amari_index(np.diag([3.0, -2.0])) == 0.0

    def test_maximal_confusion(self):
        assert amari_index(np.ones((2, 2))) == 1.0
        assert oracle.loop_amari(np.ones((2, 2))) == 1.0

    def test_degenerate(self):
        with pytest.raises(DomainError):
            amari_index([[1.0, 0.0], [0.0, 0.0]])

    def test_non_square(self):
        with pytest.raises(DimensionError):
            amari_index(np.ones((2, 3)))

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_all_scaled_permutations(self, n):
        rng = np.random.default_rng(n)
        for perm in itertools.permutations(range(n)):
            D = np.diag(rng.uniform(0.1, 5, n) * rng.choice([-1, 1], n))
            assert amari_index(np.eye(n)[list(perm)] @ D) == pytest.approx(0.0, abs=1e-15)

    @given(st.integers(2, 5), st.integers(0, 10_000))
    def test_matches_loop_and_bounds(self, n, seed):
        G = np.random.default_rng(seed).standard_normal((n, n))
        value = amari_index(G)
        assert value == pytest.approx(oracle.loop_amari(G), abs=1e-12)
        assert 0.0 <= value <= 1.0 + 1e-12


class TestHistogram:
    def test_constant(self):
        counts, _ = histogram(np.full(17, 2.5), 5)
        assert counts.sum() == 17 and np.count_nonzero(counts) == 1

    def test_right_closed_last_bin(self):
        counts, edges = histogram([0.0, 0.5, 1.0], 2, range=(0, 1))
        np.testing.assert_array_equal(counts, [1, 2])
        np.testing.assert_array_equal(edges, [0, 0.5, 1])

    def test_uniform_within_4_sigma(self):
        x = np.random.default_rng(0).uniform(size=10_000)
        counts, _ = histogram(x, 10)
        sigma = np.sqrt(10_000 * 0.1 * 0.9)
        assert np.all(np.abs(counts - 1000) <= 4 * sigma)

    def test_errors(self):
        with pytest.raises(DomainError):
            histogram([], 3)
        with pytest.raises(DomainError):
            histogram([1.0], 0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 60))
    def test_counts_sum_to_length(self, values, bins):
        counts, edges = histogram(values, bins)
        assert counts.sum() == len(values)
        assert len(edges) == bins + 1


class TestPhaseScatter:
    def test_diagonal(self):
        S = generate_sources("ex1").data
        P = phase_scatter(S, 1, 1)
        np.testing.assert_array_equal(P[:, 0], P[:, 1])

    def test_ex1_pairs(self):
        S = generate_sources("ex1").data
        P = phase_scatter(S, 0, 1)
        assert P.shape == (500, 2)
        assert np.all(np.abs(P) <= 1.0)
        np.testing.assert_array_equal(P[:, 0], S[0])

    def test_identity_mixing(self):
        S = generate_sources("ex1").data
        np.testing.assert_array_equal(phase_scatter(np.eye(2) @ S, 0, 1), phase_scatter(S, 0, 1))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            phase_scatter(np.zeros((2, 3)), 0, 2)
