"""Deterministic synthetic sources and mixing matrices for the four benchmark
experiments.

Sources are evaluated in radians on the grid ``t_k = t_start + k * t_step``,
``k = 0 .. K`` with the end point included (500 samples by default):

* ``s1(t) = sin(500 t + 10 cos(50 t))`` -- frequency-modulated tone
* ``s2(t) = sin(300 t)``
* ``s3(t) = sign(cos(120 t - 5 cos(50 t)))`` -- FM square wave, ``sign(0) = +1``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import MixingMatrix, SourceBlock
from .priors import parse_enum


class ExampleId(str, enum.Enum):
    EX1 = "ex1"
    EX2 = "ex2"
    EX3 = "ex3"
    EX4 = "ex4"


_MIXING = {
    ExampleId.EX1: [[1.0, 0.4], [-0.6, 1.0]],
    ExampleId.EX2: (0.3 * np.array([[1.0, -0.5, 0.2], [-0.5, 1.0, -0.5], [0.5, -0.5, 1.0]])).tolist(),
    ExampleId.EX3: [[1.0, -0.5], [0.5, 1.0], [-0.2, 0.5]],
    ExampleId.EX4: [[1.0, 0.2, 1.0], [-0.5, 1.0, 0.2]],
}

_N_SOURCES = {ExampleId.EX1: 2, ExampleId.EX2: 3, ExampleId.EX3: 2, ExampleId.EX4: 3}


@dataclass(frozen=True)
class ExampleSpec:
    example_id: ExampleId = ExampleId.EX1
    t_start: float = 0.0
    t_step: float = 0.001
    t_end: float = 0.499

    def __post_init__(self):
        object.__setattr__(self, "example_id", parse_enum(ExampleId, self.example_id))
        if not self.t_step > 0:
            raise DomainError("t_step must be positive")
        if self.t_end < self.t_start:
            raise DomainError("t_end must not precede t_start")

    @property
    def n_samples(self) -> int:
        # inclusive end point; rounding absorbs binary representation error
        return int(np.floor((self.t_end - self.t_start) / self.t_step + 1e-9)) + 1

    def grid(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_samples) * self.t_step


def _sign(z):
    return np.where(z >= 0, 1.0, -1.0)


def source_formulas(t):
    """Return the three benchmark waveforms evaluated at ``t``."""
    t = np.asarray(t, dtype=np.float64)
    s1 = np.sin(500.0 * t + 10.0 * np.cos(50.0 * t))
    s2 = np.sin(300.0 * t)
    s3 = _sign(np.cos(120.0 * t - 5.0 * np.cos(50.0 * t)))
    return s1, s2, s3


def generate_sources(spec: ExampleSpec | str = ExampleSpec()) -> SourceBlock:
    """Source block for an experiment: two sources for ex1/ex3, three for ex2/ex4."""
    if not isinstance(spec, ExampleSpec):
        spec = ExampleSpec(spec)
    rows = source_formulas(spec.grid())[: _N_SOURCES[spec.example_id]]
    return SourceBlock(np.vstack(rows), sample_period=spec.t_step)


def example_mixing(example_id) -> MixingMatrix:
    """The fixed mixing matrix of an experiment (ex3 is 3x2, ex4 is 2x3)."""
    return MixingMatrix(_MIXING[parse_enum(ExampleId, example_id)])
