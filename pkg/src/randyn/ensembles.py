"""Random interaction matrices A = W / sqrt(n) and initial vectors.

Randomness comes from numpy's Philox4x64 counter-based generator. Every
draw is keyed by ``(seed, stream_tag)`` through a ``SeedSequence``, so the
matrix and the initial vector of one system come from independent streams,
and replicas derive their seed from ``(master_seed, replica_index)`` (see
:func:`replica_seed`). Draw order is fixed: full row-major for general
matrices, row-major over ``i <= j`` for symmetric ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError

SQRT3 = math.sqrt(3.0)


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value: "str | Family") -> "Family":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValidationError(f"unknown family {value!r}; expected one of {names}") from None


class Stream(int, Enum):
    MATRIX = 0
    INITIAL = 1
    NORM = 2


@dataclass(frozen=True)
class EntryLaw:
    """Law of the unscaled entries W_ij: mean 0, standard deviation ``w``."""

    family: Family = Family.GAUSSIAN
    w: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (math.isfinite(self.w) and self.w > 0):
            raise ValidationError(f"w must be a positive finite number, got {self.w!r}")


@dataclass(frozen=True)
class InitialLaw:
    """Initial condition: the all-ones vector, or i.i.d. coordinates.

    For ``kind="iid"`` the coordinates have mean ``a0`` and second moment
    ``w0sq``; they are ``a0 + sqrt(w0sq - a0**2) * u`` with ``u`` a unit
    draw of ``family``. ``w0sq == a0**2`` would make them constant, which
    is excluded.
    """

    kind: str = "ones"
    family: Family = Family.GAUSSIAN
    a0: float = 0.0
    w0sq: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ones", "iid"):
            raise ValidationError(f"initial kind must be 'ones' or 'iid', got {self.kind!r}")
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.kind == "iid":
            if not (math.isfinite(self.a0) and math.isfinite(self.w0sq)):
                raise ValidationError("a0 and w0sq must be finite")
            if not self.w0sq > self.a0 ** 2:
                raise ValidationError(
                    f"w0sq must exceed a0**2 (got w0sq={self.w0sq!r}, a0={self.a0!r})"
                )

    @property
    def sd(self) -> float:
        return math.sqrt(self.w0sq - self.a0 ** 2)

    @property
    def w0(self) -> float:
        return math.sqrt(self.w0sq)


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    symmetric: bool = False
    entry_law: EntryLaw = EntryLaw()
    initial_law: InitialLaw = InitialLaw()
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class LawMoments:
    mean: float
    variance: float
    fourth_moment: float
    tail_alpha: float  # math.inf: the tail bound holds for every alpha (bounded law)


def law_moments(law: EntryLaw) -> LawMoments:
    w2 = law.w ** 2
    if law.family is Family.GAUSSIAN:
        return LawMoments(0.0, w2, 3.0 * w2 * w2, 2.0)
    if law.family is Family.RADEMACHER:
        return LawMoments(0.0, w2, w2 * w2, math.inf)
    return LawMoments(0.0, w2, 9.0 * w2 * w2 / 5.0, math.inf)


def stream(seed: int, tag: Stream) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(tag)])
    return np.random.Generator(np.random.Philox(ss))


def replica_seed(master_seed: int, replica_index: int, salt: tuple = ()) -> int:
    """Seed of replica ``replica_index``; depends on nothing else.

    ``salt`` separates families of replicas drawn from one master seed
    (the dimension sweep uses the dimension).
    """
    key = [int(master_seed), *(int(s) for s in salt), int(replica_index)]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0])


def unit_draws(rng: np.random.Generator, family: Family, size) -> np.ndarray:
    """Mean 0, variance 1 draws; the scale is applied by the caller."""
    if family is Family.GAUSSIAN:
        return rng.standard_normal(size)
    if family is Family.RADEMACHER:
        return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    return rng.uniform(-SQRT3, SQRT3, size)


def sample_matrix(spec: EnsembleSpec) -> np.ndarray:
    n = spec.n
    rng = stream(spec.seed, Stream.MATRIX)
    scale = spec.entry_law.w / math.sqrt(n)
    if not spec.symmetric:
        return unit_draws(rng, spec.entry_law.family, (n, n)) * scale
    iu = np.triu_indices(n)
    vals = unit_draws(rng, spec.entry_law.family, iu[0].size) * scale
    A = np.empty((n, n))
    A[iu] = vals
    A[iu[1], iu[0]] = vals
    return A


def sample_initial(spec: EnsembleSpec) -> np.ndarray:
    law = spec.initial_law
    if law.kind == "ones":
        return np.ones(spec.n)
    rng = stream(spec.seed, Stream.INITIAL)
    return law.a0 + law.sd * unit_draws(rng, law.family, spec.n)
