"""Core data types and the linear mixing model ``x(t) = A s(t) + e(t)``.

All blocks store one column per time sample. Matrices are held as read-only
float64 numpy arrays so instances can be shared freely.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

DEFAULT_SAMPLE_PERIOD = 0.001


def _frozen_matrix(data, name, *, allow_empty=False):
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if name in ("mixing", "separating") else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not allow_empty and (arr.shape[0] < 1 or arr.shape[1] < 1):
        raise DimensionError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SourceBlock:
    """n_sources x T matrix of source samples (truth or estimate)."""

    data: np.ndarray
    sample_period: float = DEFAULT_SAMPLE_PERIOD

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_matrix(self.data, "source block"))
        if not self.sample_period > 0:
            raise DomainError("sample_period must be positive")

    @property
    def n_sources(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_period


@dataclass(frozen=True)
class ObservationBlock:
    """m_sensors x T matrix of sensor samples."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_matrix(self.data, "observation block"))

    @property
    def n_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MixingMatrix:
    """m_sensors x n_sources mixing matrix; rectangular shapes are allowed."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_matrix(self.data, "mixing"))

    @property
    def n_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def n_sources(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SeparatingMatrix:
    """n_sources x m_sensors separating matrix."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_matrix(self.data, "separating"))

    @property
    def n_sources(self) -> int:
        return self.data.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. centred Gaussian sensor noise; ``sigma_eps == 0`` is the exact model."""

    sigma_eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sigma_eps) and self.sigma_eps >= 0):
            raise DomainError(f"sigma_eps must be >= 0, got {self.sigma_eps}")


def as_array(obj) -> np.ndarray:
    """Return the float matrix behind a block/matrix wrapper or array-like."""
    if isinstance(obj, (SourceBlock, ObservationBlock, MixingMatrix, SeparatingMatrix)):
        return obj.data
    return np.asarray(obj, dtype=np.float64)


def mix(A, S, noise: NoiseSpec | None = None) -> ObservationBlock:
    """Mix sources through ``A`` and add seeded Gaussian noise.

    Parameters
    ----------
    A : MixingMatrix or (m, n) array
    S : SourceBlock or (n, T) array
    noise : NoiseSpec, optional
        Defaults to the noiseless model.

    Returns
    -------
    ObservationBlock
        ``X[:, t] = A @ S[:, t] + e(t)`` with ``e(t) ~ N(0, sigma_eps^2 I)``.
    """
    A = as_array(A)
    S = as_array(S)
    if A.ndim != 2 or S.ndim != 2:
        raise DimensionError("mix expects 2-D operands")
    if A.shape[1] != S.shape[0]:
        raise DimensionError(f"mixing matrix has {A.shape[1]} columns but there are {S.shape[0]} sources")
    X = A @ S
    noise = noise or NoiseSpec()
    if noise.sigma_eps > 0:
        rng = np.random.default_rng(noise.seed)
        X = X + noise.sigma_eps * rng.standard_normal(X.shape)
    return ObservationBlock(X)


def apply_separator(B, X) -> SourceBlock:
    """Return ``Y = B X``, one separated sample per column."""
    B = as_array(B)
    X = as_array(X)
    if B.ndim != 2 or X.ndim != 2:
        raise DimensionError("apply_separator expects 2-D operands")
    if B.shape[1] != X.shape[0]:
        raise DimensionError(f"separating matrix has {B.shape[1]} columns but there are {X.shape[0]} sensors")
    return SourceBlock(B @ X)


# --- CSV block format ------------------------------------------------------
# One row per channel, one column per sample, no header by default. A leading
# "# channels=n samples=T" line is accepted and ignored. Files whose first line
# starts with "t," are time-series tables (one row per sample) and are
# transposed on read.

def _format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_block_csv(path, data, header: bool = False) -> None:
    data = np.atleast_2d(as_array(data))
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        if header:
            fh.write(f"# channels={data.shape[0]} samples={data.shape[1]}\n")
        for row in data:
            fh.write(_format_row(row) + "\n")


def write_timeseries_csv(path, data, times, names=None) -> None:
    """Write ``t, ch1, ch2, ...`` columns, one line per sample."""
    data = np.atleast_2d(as_array(data))
    names = names or [f"ch{i + 1}" for i in range(data.shape[0])]
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(["t", *names]) + "\n")
        for k, t in enumerate(times):
            fh.write(_format_row([t, *data[:, k]]) + "\n")


def read_block_csv(path) -> np.ndarray:
    """Read a matrix in either block or time-series layout."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DomainError(f"{path}: empty CSV")
    if lines[0].startswith("#"):
        lines = lines[1:]
    timeseries = lines[0].split(",")[0].strip().lower() == "t"
    if timeseries:
        lines = lines[1:]
    try:
        arr = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DomainError(f"{path}: malformed CSV ({exc})") from None
    if timeseries:
        arr = arr[:, 1:].T
    return np.ascontiguousarray(arr)
