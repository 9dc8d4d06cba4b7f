"""Empirical objects built from trajectory frames.

Coordinates of one replica are exchangeable, so the law of x_1(t) is
estimated from all coordinates of all replicas pooled together. That
pooling inflates the nominal sample size: coordinates of one replica are
correlated, so standard errors here are computed across replicas.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyMeasureError, ValidationError
from .propagator import TrajectoryFrame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmpiricalMeasure:
    samples: np.ndarray  # sorted ascending

    @classmethod
    def from_samples(cls, values) -> "EmpiricalMeasure":
        arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("samples must be finite")
        arr.setflags(write=False)
        return cls(arr)

    @property
    def n_total(self) -> int:
        return int(self.samples.size)


def _nonempty(m: EmpiricalMeasure) -> None:
    if m.n_total == 0:
        raise EmptyMeasureError("empirical measure has no samples")


def counting_function(m: EmpiricalMeasure, lam):
    """Fraction of samples <= lam (vectorized over lam)."""
    _nonempty(m)
    return np.searchsorted(m.samples, lam, side="right") / m.n_total


def ks_distance(
    m: EmpiricalMeasure,
    cdf: Callable,
    cdf_left: Callable | None = None,
) -> float:
    """Exact sup_lambda |F_n(lambda) - F(lambda)|.

    ``cdf`` must accept an array. Only the values of F and of its left
    limits at the sample points matter; for a continuous F leave
    ``cdf_left`` out. Targets with atoms (degenerate gaussians, discrete
    mixtures) need it for the supremum to be exact.
    """
    _nonempty(m)
    x = m.samples
    F = np.asarray(cdf(x), dtype=np.float64)
    FL = F if cdf_left is None else np.asarray(cdf_left(x), dtype=np.float64)
    return float(_kernels.ks_sup(x, F, FL))


def stieltjes(m: EmpiricalMeasure, z: complex) -> complex:
    _nonempty(m)
    z = complex(z)
    if z.imag == 0:
        raise ValidationError("Stieltjes transform needs Im z != 0")
    return complex(np.mean(1.0 / (m.samples - z)))


@dataclass
class ReplicaPanel:
    """Frames of R replicas on a shared time grid.

    ``x`` has shape (R, T, n); ``overflow`` has shape (R, T).
    """

    times: tuple
    x: np.ndarray
    overflow: np.ndarray

    @classmethod
    def from_frames(cls, runs: Sequence[Sequence[TrajectoryFrame]]) -> "ReplicaPanel":
        if not runs:
            raise ValidationError("panel needs at least one replica")
        times = tuple(f.t for f in runs[0])
        for r in runs:
            if tuple(f.t for f in r) != times:
                raise ValidationError("all replicas must share the same time grid")
        x = np.array([[f.x for f in r] for r in runs], dtype=np.float64)
        overflow = np.array([[f.overflow for f in r] for r in runs], dtype=bool)
        return cls(times, x, overflow)

    @property
    def replicas(self) -> int:
        return int(self.x.shape[0])

    def index(self, t: float) -> int:
        try:
            return self.times.index(float(t))
        except ValueError:
            raise ValidationError(f"time {t!r} is not on the panel grid {self.times}") from None

    def valid(self, t: float) -> np.ndarray:
        """(R_valid, n) coordinates at t, overflow-flagged replicas dropped loudly."""
        k = self.index(t)
        bad = self.overflow[:, k]
        if bad.any():
            log.warning("t=%g: excluding %d of %d replicas flagged for overflow",
                        t, int(bad.sum()), self.replicas)
        return self.x[~bad, k, :]

    def measure(self, t: float) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_samples(self.valid(t))


def replica_counts(panel: ReplicaPanel, lam: float, t: float) -> np.ndarray:
    """Per-replica counting function N_n(lam, t)."""
    xs = panel.valid(t)
    return (xs <= lam).mean(axis=1)


def replica_variance_of_N(panel: ReplicaPanel, lam: float, t: float) -> float:
    counts = replica_counts(panel, lam, t)
    if counts.size < 2:
        raise ValidationError("replica variance needs at least 2 valid replicas")
    return float(np.var(counts, ddof=1))


def _pair_products(panel: ReplicaPanel, t: float, s: float) -> np.ndarray:
    if panel.replicas < 2:
        raise ValidationError("covariance needs at least 2 replicas")
    i, j = panel.index(t), panel.index(s)
    ok = ~(panel.overflow[:, i] | panel.overflow[:, j])
    if ok.sum() < 2:
        raise ValidationError(f"fewer than 2 valid replicas at t={t!r}, s={s!r}")
    return (panel.x[ok, i, :] * panel.x[ok, j, :]).mean(axis=1)


def empirical_covariance(panel: ReplicaPanel, t: float, s: float) -> float:
    """Pooled average of x_i(t) x_i(s) over replicas and coordinates."""
    return float(_pair_products(panel, t, s).mean())


def covariance_with_se(panel: ReplicaPanel, t: float, s: float) -> tuple[float, float]:
    per = _pair_products(panel, t, s)
    return float(per.mean()), float(per.std(ddof=1) / np.sqrt(per.size))


@dataclass(frozen=True)
class PooledMoments:
    mean: float
    variance: float
    second_moment: float
    n_effective: int
    replicas: int
    mean_se: float
    variance_se: float
    second_moment_se: float


def _pooled_variance(per_mean: np.ndarray, per_second: np.ndarray) -> float:
    return float(per_second.mean() - per_mean.mean() ** 2)


def pooled_moments(panel: ReplicaPanel, t: float) -> PooledMoments:
    """Pooled mean/variance at t with replica-level (jackknife) standard errors.

    With a single valid replica the standard errors are NaN.
    """
    xs = panel.valid(t)
    R = xs.shape[0]
    if R == 0:
        raise ValidationError(f"every replica is flagged for overflow at t={t!r}")
    per_mean = xs.mean(axis=1)
    per_second = (xs * xs).mean(axis=1)
    mean = float(per_mean.mean())
    second = float(per_second.mean())
    variance = max(second - mean * mean, 0.0)
    if R < 2:
        nan = float("nan")
        return PooledMoments(mean, variance, second, int(xs.size), R, nan, nan, nan)
    mean_se = float(per_mean.std(ddof=1) / np.sqrt(R))
    second_se = float(per_second.std(ddof=1) / np.sqrt(R))
    # leave-one-replica-out jackknife for the nonlinear variance estimator
    sm, ss = per_mean.sum(), per_second.sum()
    loo_m = (sm - per_mean) / (R - 1)
    loo_s = (ss - per_second) / (R - 1)
    loo_var = loo_s - loo_m ** 2
    var_se = float(np.sqrt((R - 1) / R * np.sum((loo_var - loo_var.mean()) ** 2)))
    return PooledMoments(mean, variance, second, int(xs.size), R, mean_se, var_se, second_se)
