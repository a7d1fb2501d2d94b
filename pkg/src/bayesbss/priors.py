"""Source laws, mixing-matrix priors and structured source penalties.

Every source law is described by an unnormalized log-density ``log p(z)`` and
its score ``phi(z) = -d/dz log p(z)``. Mixing priors are Gaussian-like
``p(A) ∝ exp(-psi(A) / (2 sigma_a^2))`` with a positive quadratic-form penalty
``psi``.

All functions accept scalars or numpy arrays and operate elementwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "LawFamily",
    "SourceLaw",
    "PriorKind",
    "MixingPrior",
    "Boundary",
    "SpatialPriorSpec",
    "TemporalPriorSpec",
    "log_density",
    "score_phi",
    "score_derivative",
    "mixing_penalty",
    "mixing_log_prior",
    "mixing_prior_gradient",
    "default_weights",
    "build_spatial_D",
    "temporal_penalty",
    "law_from_dict",
    "prior_from_dict",
    "parse_enum",
]


def _norm_name(name: str) -> str:
    return str(name).replace("_", "").replace("-", "").replace(" ", "").lower()


def parse_enum(enum_cls, value):
    """Look up an enum member by value or name, ignoring case, ``_`` and ``-``."""
    if isinstance(value, enum_cls):
        return value
    key = _norm_name(value)
    for member in enum_cls:
        if key in (_norm_name(member.value), _norm_name(member.name)):
            return member
    valid = ", ".join(m.value for m in enum_cls)
    raise DomainError(f"unknown {enum_cls.__name__} {value!r}; valid names: {valid}")


class LawFamily(str, enum.Enum):
    GAUSS = "gauss"
    LAPLACE = "laplace"
    CAUCHY = "cauchy"
    GAMMA = "gamma"
    SUBGAUSSIAN = "subgaussian"
    GAUSSMIXTURE = "gaussmixture"


@dataclass(frozen=True)
class SourceLaw:
    """A parametric source density.

    ============  ==============================  =========================
    family        log p(z) (constant dropped)     phi(z)
    ============  ==============================  =========================
    gauss         -alpha z^2                      2 alpha z
    laplace       -alpha |z|                      alpha sign(z)
    cauchy        -log(1 + (z/alpha)^2)           2z / (alpha^2 + z^2)
    gamma         alpha log z - beta z            -alpha/z + beta
    subgaussian   -z^2/2 - 2 log cosh z           z + 2 tanh z
    gaussmixture  -z^2/2 + log cosh(alpha z)      z - alpha tanh(alpha z)
    ============  ==============================  =========================
    """

    family: LawFamily = LawFamily.GAUSS
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", parse_enum(LawFamily, self.family))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if not np.isfinite(self.alpha):
            raise DomainError("alpha must be finite")
        if self.family in (LawFamily.GAUSS, LawFamily.LAPLACE, LawFamily.CAUCHY, LawFamily.GAMMA):
            if self.alpha <= 0:
                raise DomainError(f"{self.family.value} law requires alpha > 0")
        if self.family is LawFamily.GAMMA and not self.beta > 0:
            raise DomainError("gamma law requires beta > 0")

    @property
    def positive_support(self) -> bool:
        return self.family is LawFamily.GAMMA

    @classmethod
    def gauss(cls, alpha=0.5):
        return cls(LawFamily.GAUSS, alpha)

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "alpha": self.alpha}
        if self.family is LawFamily.GAMMA:
            out["beta"] = self.beta
        return out


def _check_support(law: SourceLaw, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite argument to a source law")
    if law.positive_support and np.any(z <= 0):
        bad = np.flatnonzero(np.ravel(z) <= 0)[0]
        raise DomainError(f"gamma law support is z > 0; got z={np.ravel(z)[bad]!r} at flat index {bad}")
    return z


def _logcosh(z):
    # log(cosh z) without overflow for large |z|
    return np.logaddexp(z, -z) - np.log(2.0)


def _sech2(z):
    return 1.0 / np.cosh(np.clip(z, -350.0, 350.0)) ** 2


def _out(value, z):
    return float(value) if np.ndim(z) == 0 else value


def log_density(law: SourceLaw, z):
    """Unnormalized log-density of ``law`` at ``z``.

    Raises
    ------
    DomainError
        If any ``z`` lies outside the support.
    """
    z = _check_support(law, z)
    a, b = law.alpha, law.beta
    fam = law.family
    if fam is LawFamily.GAUSS:
        val = -a * z**2
    elif fam is LawFamily.LAPLACE:
        val = -a * np.abs(z)
    elif fam is LawFamily.CAUCHY:
        val = -np.log1p((z / a) ** 2)
    elif fam is LawFamily.GAMMA:
        val = a * np.log(z) - b * z
    elif fam is LawFamily.SUBGAUSSIAN:
        val = -0.5 * z**2 - 2.0 * _logcosh(z)
    else:
        val = -0.5 * z**2 + _logcosh(a * z)
    return _out(val, z)


def score_phi(law: SourceLaw, z, paper_table: bool = False):
    """Score function ``phi(z) = -p'(z)/p(z)``.

    Parameters
    ----------
    law : SourceLaw
    z : float or ndarray
    paper_table : bool
        Return the tabulated compatibility forms ``z + tanh z`` (subgaussian)
        and ``alpha z - alpha tanh(alpha z)`` (gaussmixture) instead of the
        exact derivatives. Other families are unaffected.
    """
    z = _check_support(law, z)
    a, b = law.alpha, law.beta
    fam = law.family
    if fam is LawFamily.GAUSS:
        val = 2.0 * a * z
    elif fam is LawFamily.LAPLACE:
        val = a * np.sign(z)
    elif fam is LawFamily.CAUCHY:
        val = 2.0 * z / (a**2 + z**2)
    elif fam is LawFamily.GAMMA:
        val = -a / z + b
    elif fam is LawFamily.SUBGAUSSIAN:
        val = z + (1.0 if paper_table else 2.0) * np.tanh(z)
    else:
        val = (a * z if paper_table else z) - a * np.tanh(a * z)
    return _out(val, z)


def score_derivative(law: SourceLaw, z):
    """Derivative ``phi'(z)``; used for Hessians of the joint criterion.

    The Laplace law returns 0 (its score is piecewise constant).
    """
    z = _check_support(law, z)
    a = law.alpha
    fam = law.family
    if fam is LawFamily.GAUSS:
        val = np.full_like(z, 2.0 * a)
    elif fam is LawFamily.LAPLACE:
        val = np.zeros_like(z)
    elif fam is LawFamily.CAUCHY:
        val = 2.0 * (a**2 - z**2) / (a**2 + z**2) ** 2
    elif fam is LawFamily.GAMMA:
        val = a / z**2
    elif fam is LawFamily.SUBGAUSSIAN:
        val = 1.0 + 2.0 * _sech2(z)
    else:
        val = 1.0 - a**2 * _sech2(a * z)
    return _out(val, z)


# --- mixing-matrix priors ---------------------------------------------------

class PriorKind(str, enum.Enum):
    FROBENIUS = "frobenius"  # ||A||^2
    IDENTITY_PROXIMITY = "identity_proximity"  # ||I - A||^2
    ROW_ORTHONORMAL = "row_orthonormal"  # ||I - A A^t||^2
    COL_ORTHONORMAL = "col_orthonormal"  # ||I - A^t A||^2
    WEIGHTED = "weighted"  # sum (w_ij a_ij)^2
    UNIFORM = "uniform"  # flat


def default_weights(m: int, n: int) -> np.ndarray:
    """Neighbour weights ``w_ii = 1`` and ``w_ij = 1 / (2|i - j| + 1)``."""
    i, j = np.indices((m, n))
    return 1.0 / (2.0 * np.abs(i - j) + 1.0)


@dataclass(frozen=True)
class MixingPrior:
    kind: PriorKind = PriorKind.FROBENIUS
    sigma_a: float = 1.0
    weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_enum(PriorKind, self.kind))
        if not (np.isfinite(self.sigma_a) and self.sigma_a > 0):
            raise DomainError("sigma_a must be > 0")
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64)
            if w.ndim != 2 or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DomainError("prior weights must be a strictly positive finite matrix")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def weight_matrix(self, shape) -> np.ndarray:
        if self.weights is None:
            return default_weights(*shape)
        if self.weights.shape != tuple(shape):
            raise DimensionError(f"weights have shape {self.weights.shape}, mixing matrix has {tuple(shape)}")
        return self.weights

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "sigma_a": self.sigma_a}
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
        return out


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(getattr(A, "data", A), dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("mixing matrix must be 2-D")
    return A


def mixing_penalty(prior: MixingPrior, A) -> float:
    """Positive quadratic-form penalty ``psi(A)`` of the prior."""
    A = _as_matrix(A)
    m, n = A.shape
    kind = prior.kind
    if kind is PriorKind.FROBENIUS:
        return float(np.sum(A**2))
    if kind is PriorKind.IDENTITY_PROXIMITY:
        if m != n:
            raise DimensionError(f"identity-proximity prior needs a square matrix, got {A.shape}")
        return float(np.sum((np.eye(n) - A) ** 2))
    if kind is PriorKind.ROW_ORTHONORMAL:
        return float(np.sum((np.eye(m) - A @ A.T) ** 2))
    if kind is PriorKind.COL_ORTHONORMAL:
        return float(np.sum((np.eye(n) - A.T @ A) ** 2))
    if kind is PriorKind.WEIGHTED:
        return float(np.sum((prior.weight_matrix(A.shape) * A) ** 2))
    return 0.0


def mixing_log_prior(prior: MixingPrior, A) -> float:
    """``-psi(A) / (2 sigma_a^2)``; zero for the uniform prior."""
    return -mixing_penalty(prior, A) / (2.0 * prior.sigma_a**2)


def mixing_prior_gradient(prior: MixingPrior, A) -> np.ndarray:
    """Gradient ``dpsi/dA`` of the positive penalty (no ``1/2 sigma_a^2`` factor)."""
    A = _as_matrix(A)
    m, n = A.shape
    kind = prior.kind
    if kind is PriorKind.FROBENIUS:
        return 2.0 * A
    if kind is PriorKind.IDENTITY_PROXIMITY:
        if m != n:
            raise DimensionError(f"identity-proximity prior needs a square matrix, got {A.shape}")
        return 2.0 * (A - np.eye(n))
    if kind is PriorKind.ROW_ORTHONORMAL:
        return 4.0 * (A @ A.T - np.eye(m)) @ A
    if kind is PriorKind.COL_ORTHONORMAL:
        return 4.0 * A @ (A.T @ A - np.eye(n))
    if kind is PriorKind.WEIGHTED:
        return 2.0 * prior.weight_matrix(A.shape) ** 2 * A
    return np.zeros_like(A)


# --- structured source priors -----------------------------------------------

class Boundary(str, enum.Enum):
    TRUNCATE = "truncate"
    REFLECT = "reflect"


@dataclass(frozen=True)
class SpatialPriorSpec:
    """Second-difference smoothness across source index; ``sigma_s`` scales it."""

    sigma_s: float = 1.0
    boundary: Boundary = Boundary.TRUNCATE

    def __post_init__(self):
        object.__setattr__(self, "boundary", parse_enum(Boundary, self.boundary))
        if not self.sigma_s > 0:
            raise DomainError("sigma_s must be > 0")


def build_spatial_D(n_sources: int, boundary=Boundary.TRUNCATE) -> np.ndarray:
    """Second-difference operator on the source index.

    ``truncate`` gives the plain tridiagonal Toeplitz matrix (2 on the
    diagonal, -1 off it). ``reflect`` mirrors the missing neighbour, so the
    end diagonals become 1 and constant vectors lie in the nullspace.
    """
    boundary = parse_enum(Boundary, boundary)
    if n_sources < 2:
        raise DomainError("spatial operator needs at least two sources")
    D = 2.0 * np.eye(n_sources) - np.eye(n_sources, k=1) - np.eye(n_sources, k=-1)
    if boundary is Boundary.REFLECT:
        D[0, 0] = D[-1, -1] = 1.0
    return D


@dataclass(frozen=True)
class TemporalPriorSpec:
    """Per-source AR(1) smoothness weights ``alpha_j``."""

    alphas: tuple = ()

    def __post_init__(self):
        a = np.array(self.alphas, dtype=np.float64).ravel()
        if a.size < 1:
            raise DomainError("temporal prior needs at least one weight")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise DomainError("temporal weights must be finite and non-negative")
        object.__setattr__(self, "alphas", tuple(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array(self.alphas)


def temporal_penalty(S, spec: TemporalPriorSpec) -> float:
    """``sum_j alpha_j sum_{t>=2} (s_j(t) - s_j(t-1))^2``."""
    S = np.asarray(getattr(S, "data", S), dtype=np.float64)
    if S.ndim != 2:
        raise DimensionError("source block must be 2-D")
    alphas = spec.as_array()
    if alphas.size != S.shape[0]:
        raise DimensionError(f"{alphas.size} temporal weights for {S.shape[0]} sources")
    diffs = np.diff(S, axis=1)
    return float(np.sum(alphas * np.sum(diffs**2, axis=1)))


# --- config parsing -----------------------------------------------------------

def law_from_dict(d) -> SourceLaw:
    if isinstance(d, SourceLaw):
        return d
    if isinstance(d, str):
        d = {"family": d}
    d = dict(d)
    family = parse_enum(LawFamily, d.pop("family"))
    default_alpha = 0.5 if family is LawFamily.GAUSS else 1.0
    return SourceLaw(family, d.pop("alpha", default_alpha), d.pop("beta", 1.0))


def prior_from_dict(d) -> MixingPrior:
    if isinstance(d, MixingPrior):
        return d
    if isinstance(d, str):
        d = {"kind": d}
    d = dict(d)
    return MixingPrior(d.pop("kind"), d.pop("sigma_a", 1.0), d.pop("weights", None))
