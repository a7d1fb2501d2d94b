import numpy as np
import pytest

from bayesbss.errors import DimensionError, DivergenceError, DomainError, NumericError
from bayesbss.estimators import (
    EstimatorConfig,
    HyperParams,
    fixed_point_residuals,
    gaussian_evidence_logpdf,
    joint_criterion,
    nonlinearity,
    run_estimator,
    whitening_matrix,
)
from bayesbss.estimators.config import Algorithm
from bayesbss.metrics import best_match
from bayesbss.model import NoiseSpec, mix
from bayesbss.priors import MixingPrior, SourceLaw, SpatialPriorSpec, TemporalPriorSpec
from bayesbss.signals import example_mixing, generate_sources

GAUSS = SourceLaw("gauss", 0.5)


def _example(ex, sigma=0.0, seed=0):
    S = generate_sources(ex)
    return S.data, mix(example_mixing(ex), S, NoiseSpec(sigma, seed)).data


def _gauss_problem(seed, T=40):
    r = np.random.default_rng(seed)
    A = r.standard_normal((2, 2))
    S = r.standard_normal((2, T))
    return A @ S


class TestUsedAlg:
    def test_example1_separates(self):
        S, X = _example("ex1")
        res = run_estimator(X, EstimatorConfig())
        assert res.iters_run == 100 and len(res.criterion_trace) == 100
        assert min(best_match(S, res.S_hat).correlations) >= 0.95

    def test_identity_mixing_recovers_sources(self):
        S, _ = _example("ex1")
        cfg = EstimatorConfig(hyper=HyperParams(lam=0.0, mu=0.0, sigma_eps=1e-8), init_A=np.eye(2), whiten=False,
                              g="identity", max_iters=5)
        res = run_estimator(S, cfg)
        np.testing.assert_allclose(res.S_hat.data, S, atol=1e-10)

    def test_example4_residual(self):
        _, X = _example("ex4")
        res = run_estimator(X, EstimatorConfig(n_sources=3))
        assert res.S_hat.n_sources == 3
        assert res.residual(X) <= 0.2

    def test_example3_rectangular(self):
        S, X = _example("ex3")
        res = run_estimator(X, EstimatorConfig(n_sources=2))
        assert res.A_hat.data.shape == (3, 2)
        assert min(best_match(S, res.S_hat).correlations) >= 0.9

    def test_whitening(self, rng):
        X = rng.standard_normal((3, 3)) @ rng.standard_normal((3, 400))
        W = whitening_matrix(X, 3)
        Z = W @ X  # second moment about zero, matching the zero-mean mixing model
        np.testing.assert_allclose(Z @ Z.T / 400, np.eye(3), atol=1e-10)

    def test_unknown_nonlinearity(self):
        with pytest.raises(DomainError):
            nonlinearity("relu")

    def test_deterministic(self):
        _, X = _example("ex2", sigma=0.05, seed=3)
        a = run_estimator(X, EstimatorConfig(init_seed=4))
        b = run_estimator(X, EstimatorConfig(init_seed=4))
        assert a.A_hat.data.tobytes() == b.A_hat.data.tobytes()
        assert a.criterion_trace == b.criterion_trace


class TestDriver:
    def test_huge_tolerance_stops_after_one_iteration(self):
        X = _gauss_problem(0)
        res = run_estimator(X, EstimatorConfig("jmap_block", tol=1e12))
        assert res.iters_run == 1 and res.converged

    @pytest.mark.parametrize("seed", range(20))
    def test_block_trace_non_increasing(self, seed):
        X = _gauss_problem(seed)
        res = run_estimator(X, EstimatorConfig("jmap_block", max_iters=60))
        assert np.all(np.diff(res.criterion_trace) <= 1e-9)

    def test_block_converged_satisfies_closed_forms(self):
        X = _gauss_problem(3) + 0.1 * np.random.default_rng(9).standard_normal((2, 40))
        h = HyperParams(lam=0.1, mu=0.1)
        res = run_estimator(X, EstimatorConfig("jmap_block", h, max_iters=20000, tol=1e-14))
        assert res.converged
        A, S = res.A_hat.data, res.S_hat.data
        np.testing.assert_allclose((A.T @ A + 0.1 * np.eye(2)) @ S, A.T @ X, atol=1e-9)
        np.testing.assert_allclose(A @ (S @ S.T + 0.1 * np.eye(2)), X @ S.T, atol=1e-9)

    @pytest.mark.parametrize(
        "cfg",
        [
            EstimatorConfig("ml_relative_gradient", source_law=SourceLaw("subgaussian"), max_iters=20),
            EstimatorConfig("whiteness_constrained", max_iters=20),
            EstimatorConfig("jmap_coordinate", max_iters=3),
            EstimatorConfig("jmap_coordinate", mixing_prior=MixingPrior("weighted", weights=np.ones((2, 2))),
                            max_iters=3),
            EstimatorConfig("jmap_block", per_sample=True, max_iters=5),
            EstimatorConfig("jmap_gradient", source_law=SourceLaw("cauchy", 1.0), max_iters=20),
            EstimatorConfig("jmap_fixed_point", source_law=SourceLaw("subgaussian"), max_iters=20),
            EstimatorConfig("jmap_spatial", spatial=SpatialPriorSpec(), max_iters=20),
            EstimatorConfig("jmap_temporal", temporal=TemporalPriorSpec([1.0, 1.0]), max_iters=20),
            EstimatorConfig("jmap_temporal", temporal=TemporalPriorSpec([1.0, 1.0]), temporal_method="recursion",
                            max_iters=5),
            EstimatorConfig("marginal_map_a", max_iters=20),
        ],
        ids=lambda c: c.algorithm.value,
    )
    def test_every_algorithm_runs(self, cfg):
        _, X = _example("ex1", sigma=0.05)
        res = run_estimator(X, cfg)
        assert res.algorithm is cfg.algorithm
        assert len(res.criterion_trace) == res.iters_run <= cfg.max_iters
        assert np.all(np.isfinite(res.S_hat.data)) and np.all(np.isfinite(res.A_hat.data))

    @pytest.mark.parametrize("alg,extra", [("jmap_spatial", {"spatial": SpatialPriorSpec(boundary="reflect")}),
                                           ("jmap_temporal", {"temporal": TemporalPriorSpec([0.5, 2.0])})])
    def test_structured_traces_non_increasing(self, alg, extra):
        for seed in range(20):
            X = _gauss_problem(seed)
            res = run_estimator(X, EstimatorConfig(alg, max_iters=40, **extra))
            assert np.all(np.diff(res.criterion_trace) <= 1e-9)

    def test_marginal_trace_is_evidence(self):
        _, X = _example("ex1")
        cfg = EstimatorConfig("marginal_map_a", max_iters=10)
        res = run_estimator(X, cfg)
        assert res.criterion_trace[-1] == pytest.approx(gaussian_evidence_logpdf(res.A_hat.data, X, cfg.hyper))
        assert np.all(np.diff(res.criterion_trace) >= 0)

    def test_fixed_point_gauss_reaches_stationarity(self):
        X = _gauss_problem(4) + 0.1
        cfg = EstimatorConfig("jmap_fixed_point", HyperParams(lam=0.5, mu=0.5), source_law=GAUSS, max_iters=3000,
                              tol=1e-13)
        res = run_estimator(X, cfg)
        assert np.all(np.diff(res.criterion_trace) <= 1e-9)
        rs, ra = fixed_point_residuals(res.A_hat.data, res.S_hat.data, X, cfg.hyper, GAUSS)
        assert max(rs, ra) < 1e-5

    def test_weighted_coordinate_default_weights_diverge_on_ex1(self):
        # the literal weighted sweep divides off-diagonal entries by w^2 = 1/9,
        # which amplifies them at every sample; the run stops with its trace
        _, X = _example("ex1")
        cfg = EstimatorConfig("jmap_coordinate", mixing_prior=MixingPrior("weighted"), max_iters=3)
        with pytest.raises(DivergenceError) as info:
            run_estimator(X, cfg)
        assert len(info.value.trace) >= 1

    def test_gamma_negative_data(self):
        _, X = _example("ex1")
        with pytest.raises(NumericError, match="positive"):
            run_estimator(X, EstimatorConfig("jmap_gradient", source_law=SourceLaw("gamma", 2.0, 1.0)))

    def test_divergence_carries_trace(self):
        X = _gauss_problem(1) * 100
        cfg = EstimatorConfig("jmap_gradient", HyperParams(alpha_step=10.0, beta_step=10.0), backtracking=False)
        with pytest.raises(DivergenceError) as info:
            run_estimator(X, cfg)
        assert len(info.value.trace) >= 1

    def test_separator_needs_square(self):
        _, X = _example("ex4")
        with pytest.raises(DimensionError):
            run_estimator(X, EstimatorConfig("ml_relative_gradient", n_sources=3))

    def test_temporal_needs_weights(self):
        with pytest.raises(DomainError):
            run_estimator(_gauss_problem(0), EstimatorConfig("jmap_temporal"))

    def test_init_rows_checked(self):
        with pytest.raises(DimensionError):
            run_estimator(_gauss_problem(0), EstimatorConfig("jmap_block", init_A=np.eye(3)))

    def test_bad_input(self):
        with pytest.raises(DimensionError):
            run_estimator(np.ones(4), EstimatorConfig())


class TestConfig:
    def test_max_iters(self):
        with pytest.raises(DomainError):
            EstimatorConfig(max_iters=0)

    def test_tol(self):
        with pytest.raises(DomainError):
            EstimatorConfig(tol=0.0)

    def test_unknown_algorithm_lists_names(self):
        with pytest.raises(DomainError, match="jmap_block"):
            EstimatorConfig("jmap_magic")

    def test_hyper_from_variances(self):
        h = HyperParams.from_variances(0.5, 2.0, 0.25)
        assert h.lam == pytest.approx(0.0625) and h.mu == pytest.approx(4.0) and h.sigma_eps == 0.5

    def test_default_noise(self):
        assert HyperParams(lam=0.25).sigma_eps == 0.5
        assert HyperParams(lam=0.0).sigma_eps == 1.0

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            HyperParams(lam=-1.0)

    def test_algorithm_enum_values(self):
        assert {a.value for a in Algorithm} >= {"used_alg", "jmap_block", "marginal_map_a"}

    def test_criterion_of_result(self):
        X = _gauss_problem(2)
        cfg = EstimatorConfig("jmap_block", max_iters=5)
        res = run_estimator(X, cfg)
        assert res.criterion_trace[-1] == pytest.approx(joint_criterion(res.A_hat, res.S_hat, X, cfg.hyper))
