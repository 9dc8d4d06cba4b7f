"""Trajectories of x' = -kappa x + A x, and the operator norm of A.

The solution is x(t) = exp(-kappa t) exp(tA) x(0). Only the action of
exp(tA) on a vector is ever computed (truncated Taylor series on substeps,
step control from the 1-norm), so the cost is a few hundred matrix-vector
products per trajectory and the matrix exponential is never formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ExpmOverflowError, NormNotConvergedError, ValidationError

DEFAULT_TOL = 1e-10
MAX_TAYLOR_ORDER = 60
NORM_MAX_ITER = 20000


@dataclass(frozen=True)
class SystemConfig:
    kappa: float = 0.0
    times: tuple = (1.0,)
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not times:
            raise ValidationError("times must be non-empty")
        if any(not math.isfinite(t) or t < 0 for t in times):
            raise ValidationError("times must be finite and non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("times must be strictly increasing")
        if not math.isfinite(self.kappa):
            raise ValidationError("kappa must be finite")
        if not (0 < self.tol <= 1e-4):
            raise ValidationError(f"tol must lie in (0, 1e-4], got {self.tol!r}")


@dataclass
class TrajectoryFrame:
    t: float
    x: np.ndarray = field(repr=False)
    overflow: bool = False


def _check_square_finite(B: np.ndarray, v: np.ndarray) -> None:
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {B.shape}")
    if v.ndim != 1 or v.shape[0] != B.shape[0]:
        raise ValidationError(f"vector of length {v.shape} does not match matrix {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ValidationError("matrix has non-finite entries")
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector has non-finite entries")


def taylor_plan(t: float, norm1: float, tol: float) -> tuple[int, int]:
    """Substep count and Taylor order for exp(tB)v with ||B||_1 = norm1.

    Steps satisfy s >= ceil(t * norm1), so each substep has 1-norm at most
    one; the order is the smallest m whose remainder bound
    theta**(m+1) / (m+1)! * exp(theta) is below tol / s.
    """
    s = max(1, math.ceil(t * norm1))
    theta = t * norm1 / s
    if theta == 0.0:
        return s, 0
    budget = tol / s
    term = theta  # theta**(m+1) / (m+1)! for m = 0
    for m in range(MAX_TAYLOR_ORDER + 1):
        if term * math.exp(theta) <= budget:
            return s, m
        term *= theta / (m + 2)
    return s, MAX_TAYLOR_ORDER


def expm_action(B: np.ndarray, v: np.ndarray, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Approximate exp(tB) v without forming exp(tB)."""
    B = np.ascontiguousarray(B, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    _check_square_finite(B, v)
    if not (math.isfinite(t) and t >= 0):
        raise ValidationError(f"t must be finite and non-negative, got {t!r}")
    norm1 = float(np.abs(B).sum(axis=0).max())
    steps, order = taylor_plan(t, norm1, tol)
    if order == 0:
        return v.copy()
    x, status, _ = _kernels.taylor_substeps(B, v, t / steps, steps, order, tol / steps)
    if status:
        raise ExpmOverflowError(f"exp(tB)v overflowed (t={t:g}, ||B||_1={norm1:.4g})")
    return x


def evolve(A: np.ndarray, x0: np.ndarray, cfg: SystemConfig) -> list[TrajectoryFrame]:
    """Frames of x(t) at every ``cfg.times``.

    The kappa = 0 trajectory y(t) = exp(tA) x0 is advanced from one grid
    time to the next, and each frame is ``exp(-kappa t) * y(t)``. After an
    overflow the remaining frames are flagged and hold NaNs.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    y = np.ascontiguousarray(x0, dtype=np.float64)
    _check_square_finite(A, y)
    frames = []
    prev = 0.0
    dead = False
    for t in cfg.times:
        if not dead:
            try:
                y = expm_action(A, y, t - prev, cfg.tol)
            except ExpmOverflowError:
                dead = True
        prev = t
        if dead:
            frames.append(TrajectoryFrame(t, np.full(y.shape, np.nan), True))
            continue
        x = y * math.exp(-cfg.kappa * t)
        if not np.all(np.isfinite(x)):
            frames.append(TrajectoryFrame(t, x, True))
        else:
            frames.append(TrajectoryFrame(t, x))
    return frames


def operator_norm(
    A: np.ndarray,
    tol: float = 1e-8,
    seed: int = 0,
    max_iter: int = NORM_MAX_ITER,
) -> float:
    """Largest singular value of ``A`` by power iteration on A^T A.

    The start vector is Gaussian, drawn from ``seed``. Iteration stops when
    successive Rayleigh quotients agree to ``tol`` relatively, so the
    result is a lower bound on ||A||_2 up to that tolerance. Raises
    :class:`NormNotConvergedError` after ``max_iter`` iterations.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("operator_norm expects a matrix")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    if not A.any():
        return 0.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2])))
    x0 = rng.standard_normal(A.shape[1])
    lam, _, converged = _kernels.power_iteration_ata(A, x0, tol, max_iter)
    if not converged:
        raise NormNotConvergedError(f"power iteration did not settle in {max_iter} iterations")
    return math.sqrt(lam)
