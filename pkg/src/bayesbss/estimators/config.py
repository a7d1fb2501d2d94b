"""Hyperparameters, estimator configuration and run results."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import DomainError
from ..model import MixingMatrix, SeparatingMatrix, SourceBlock
from ..priors import (
    LawFamily,
    MixingPrior,
    PriorKind,
    SourceLaw,
    SpatialPriorSpec,
    TemporalPriorSpec,
    parse_enum,
)


class Algorithm(str, enum.Enum):
    ML_RELATIVE_GRADIENT = "ml_relative_gradient"
    WHITENESS_CONSTRAINED = "whiteness_constrained"
    JMAP_COORDINATE = "jmap_coordinate"
    JMAP_BLOCK = "jmap_block"
    JMAP_GRADIENT = "jmap_gradient"
    JMAP_FIXED_POINT = "jmap_fixed_point"
    JMAP_SPATIAL = "jmap_spatial"
    JMAP_TEMPORAL = "jmap_temporal"
    MARGINAL_MAP_A = "marginal_map_a"
    USED_ALG = "used_alg"


@dataclass(frozen=True)
class HyperParams:
    """Regularization weights and step sizes.

    Attributes
    ----------
    lam : float
        Source regularization, ``sigma_eps^2 / sigma_s^2``.
    mu : float
        Mixing regularization, ``sigma_eps^2 / sigma_a^2``.
    sigma_eps : float, optional
        Noise standard deviation. When omitted it is taken as ``sqrt(lam)``
        (unit source variance), or 1 when ``lam == 0``.
    gamma : float
        Step for the relative-gradient updates of ``B``.
    alpha_step, beta_step : float
        Steps on ``S`` and ``A`` for the joint gradient descent.
    mmap_step : float
        Step along the normalized evidence gradient on ``A``.
    white_alpha, white_beta : float
        Weights of the whiteness and score terms of the constrained ``H``.
    """

    lam: float = 0.1
    mu: float = 0.1
    sigma_eps: Optional[float] = None
    gamma: float = 0.1
    alpha_step: float = 0.1
    beta_step: float = 1e-3
    mmap_step: float = 5.0
    white_alpha: float = 1.0
    white_beta: float = 0.0

    def __post_init__(self):
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be >= 0, got {v}")
        if self.sigma_eps is None:
            object.__setattr__(self, "sigma_eps", math.sqrt(self.lam) if self.lam > 0 else 1.0)
        if not (math.isfinite(self.sigma_eps) and self.sigma_eps > 0):
            raise DomainError(f"sigma_eps must be > 0, got {self.sigma_eps}")
        for name in ("gamma", "alpha_step", "beta_step", "mmap_step"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be > 0, got {v}")

    @classmethod
    def from_variances(cls, sigma_eps, sigma_s, sigma_a, **kwargs):
        """Build ``lam = sigma_eps^2/sigma_s^2`` and ``mu = sigma_eps^2/sigma_a^2``."""
        if sigma_s <= 0 or sigma_a <= 0:
            raise DomainError("prior standard deviations must be positive")
        return cls(lam=sigma_eps**2 / sigma_s**2, mu=sigma_eps**2 / sigma_a**2, sigma_eps=sigma_eps, **kwargs)

    @property
    def noise_var(self) -> float:
        return self.sigma_eps**2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


GAUSS_UNIT = SourceLaw(LawFamily.GAUSS, 0.5)
FROBENIUS = MixingPrior(PriorKind.FROBENIUS)


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to run one estimator.

    Besides the core fields, a few switches select variants:

    ``n_sources``
        Number of sources when ``init_A`` is not given (default: sensor count).
    ``g``, ``g_scale``, ``whiten``
        Nonlinearity and preprocessing of the reference algorithm.
    ``per_sample``
        Rank-one per-sample ``A`` updates instead of the batch normal equations.
    ``temporal_method``
        ``"smoother"`` (exact minimizer over the whole block) or
        ``"recursion"`` (forward recursion).
    ``backtracking``
        Halve steps of gradient-type updates when the criterion gets worse.
    ``natural_gradient``
        Right-multiply relative-gradient updates of ``B`` by ``B``.
    """

    algorithm: Algorithm = Algorithm.USED_ALG
    hyper: HyperParams = field(default_factory=HyperParams)
    source_law: SourceLaw = GAUSS_UNIT
    mixing_prior: MixingPrior = FROBENIUS
    max_iters: int = 100
    tol: float = 1e-8
    init_A: Optional[MixingMatrix] = None
    init_seed: int = 0
    n_sources: Optional[int] = None
    spatial: Optional[SpatialPriorSpec] = None
    temporal: Optional[TemporalPriorSpec] = None
    g: str = "tanh"
    g_scale: float = 2.0
    whiten: bool = True
    per_sample: bool = False
    temporal_method: str = "smoother"
    backtracking: bool = True
    natural_gradient: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", parse_enum(Algorithm, self.algorithm))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise DomainError(f"tol must be > 0, got {self.tol}")
        if self.init_A is not None and not isinstance(self.init_A, MixingMatrix):
            object.__setattr__(self, "init_A", MixingMatrix(self.init_A))
        if self.n_sources is not None:
            if int(self.n_sources) != self.n_sources or self.n_sources < 1:
                raise DomainError(f"n_sources must be a positive integer, got {self.n_sources}")
            if self.init_A is not None and self.init_A.n_sources != self.n_sources:
                raise DomainError("n_sources disagrees with init_A")
        if self.temporal_method not in ("smoother", "recursion"):
            raise DomainError("temporal_method must be 'smoother' or 'recursion'")
        if not self.g_scale > 0:
            raise DomainError("g_scale must be > 0")

    def with_(self, **changes) -> "EstimatorConfig":
        return replace(self, **changes)

    def source_count(self, n_sensors: int) -> int:
        if self.init_A is not None:
            return self.init_A.n_sources
        return int(self.n_sources) if self.n_sources is not None else n_sensors


@dataclass(frozen=True)
class RunResult:
    """Outcome of an estimator run.

    ``criterion_trace`` holds one value per iteration. It is the minimized
    criterion (joint criterion, negative log-likelihood, whiteness misfit) for
    every algorithm except ``marginal_map_a``, where it is the maximized
    log-evidence.
    """

    A_hat: MixingMatrix
    B_hat: Optional[SeparatingMatrix]
    S_hat: SourceBlock
    criterion_trace: tuple
    iters_run: int
    converged: bool
    algorithm: Algorithm = Algorithm.USED_ALG

    def __post_init__(self):
        object.__setattr__(self, "criterion_trace", tuple(float(v) for v in self.criterion_trace))

    def residual(self, X) -> float:
        """Relative fit ``||X - A_hat S_hat||_F / ||X||_F``."""
        X = np.asarray(getattr(X, "data", X))
        return float(np.linalg.norm(X - self.A_hat.data @ self.S_hat.data) / np.linalg.norm(X))
