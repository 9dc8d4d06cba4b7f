"""Closed-form large-n limits of the coordinate distribution.

Conventions: ``sigma`` is always a variance. The semicircle density is
normalized to unit mass, rho(l) = sqrt(4 w^2 - l^2) / (2 pi w^2) on
[-2w, 2w], so that the symmetric-case mean starts at 1 like x(0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .ensembles import Family, InitialLaw
from .errors import ValidationError

SERIES_RTOL = 1e-16
QUAD_RTOL = 1e-12
QUAD_START_NODES = 32
QUAD_MAX_NODES = 1 << 16
# Direct summation is safe while the largest term stays far from overflow.
_DIRECT_EXPONENT_LIMIT = 600.0
_LOG_MAX = math.log(np.finfo(np.float64).max)


def _check_w_t(w: float, t: float) -> None:
    if not (math.isfinite(w) and w > 0):
        raise ValidationError(f"w must be positive, got {w!r}")
    if not (math.isfinite(t) and t >= 0):
        raise ValidationError(f"t must be non-negative, got {t!r}")


def bessel_series(u: float, log_scale: float = 0.0) -> float:
    """exp(log_scale) * sum_{m>=1} u**m / (m!)**2, i.e. exp(log_scale) * (I0(2 sqrt u) - 1).

    Terms are added until one falls below 1e-16 of the partial sum after
    the peak. Large arguments are summed relative to the peak term so that
    neither the series nor the prefactor has to be representable alone;
    a result beyond the double range is returned as inf.
    """
    if u < 0:
        raise ValidationError("series argument must be non-negative")
    if u == 0.0:
        return 0.0
    root = math.sqrt(u)
    if 2.0 * root <= _DIRECT_EXPONENT_LIMIT and log_scale >= -_DIRECT_EXPONENT_LIMIT:
        term = 1.0
        total = 0.0
        m = 0
        while True:
            m += 1
            term *= u / (m * m)
            total += term
            if m > root and term < SERIES_RTOL * total:
                break
        return total * math.exp(log_scale)

    peak = max(1, int(root))
    log_peak = peak * math.log(u) - 2.0 * math.lgamma(peak + 1)
    total = 1.0
    r = 1.0
    m = peak
    while True:
        m += 1
        r *= u / (m * m)
        total += r
        if r < SERIES_RTOL * total:
            break
    r = 1.0
    for m in range(peak, 1, -1):
        r *= (m * m) / u
        total += r
        if r < SERIES_RTOL * total:
            break
    log_value = log_peak + log_scale + math.log(total)
    if log_value > _LOG_MAX:
        return math.inf
    return math.exp(log_value)


def mean_iid(kappa: float, t: float) -> float:
    return math.exp(-kappa * t)


def var_iid(kappa: float, w: float, t: float) -> float:
    _check_w_t(w, t)
    return bessel_series((w * w) * (t * t), -2.0 * kappa * t)


def covariance_iid(w: float, t: float, s: float) -> float:
    """Limit of E{x_1(t) x_1(s)} for kappa = 0 and x(0) = (1, ..., 1)."""
    _check_w_t(w, t)
    _check_w_t(w, s)
    return 1.0 + bessel_series((w * w) * (t * s))


def chebyshev2_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for weight sqrt(1 - x^2) on [-1, 1]."""
    k = np.arange(1, nodes + 1)
    ang = k * np.pi / (nodes + 1)
    return np.cos(ang), np.pi / (nodes + 1) * np.sin(ang) ** 2


def semicircle_quadrature(c: float, shift: float, nodes: int) -> float:
    """(2/pi) * sum_k weight_k exp(c x_k + shift): the integral of exp(c x + shift)
    against the unit-mass semicircle on [-1, 1]."""
    x, wts = chebyshev2_rule(nodes)
    return float((2.0 / np.pi) * np.dot(wts, np.exp(c * x + shift)))


def semicircle_mgf(c: float, shift: float = 0.0) -> tuple[float, int]:
    """Node-doubled quadrature; returns (value, nodes) with the value at
    ``nodes`` agreeing with the ``nodes // 2`` value to 1e-12 relatively."""
    nodes = QUAD_START_NODES
    prev = semicircle_quadrature(c, shift, nodes)
    while nodes < QUAD_MAX_NODES:
        nodes *= 2
        cur = semicircle_quadrature(c, shift, nodes)
        if abs(cur - prev) <= QUAD_RTOL * abs(cur):
            return cur, nodes
        prev = cur
    raise ArithmeticError(f"semicircle quadrature did not settle (c={c!r})")


def mean_sym(kappa: float, w: float, t: float) -> float:
    _check_w_t(w, t)
    return semicircle_mgf(2.0 * w * t, -kappa * t)[0]


def second_moment_sym(kappa: float, w: float, t: float) -> float:
    # E{x_1(t)^2} = E{x_1(2t)} at kappa = 0, times exp(-2 kappa t)
    _check_w_t(w, t)
    return semicircle_mgf(4.0 * w * t, -2.0 * kappa * t)[0]


def var_sym(kappa: float, w: float, t: float) -> float:
    v = second_moment_sym(kappa, w, t) - mean_sym(kappa, w, t) ** 2
    return max(v, 0.0)


def semicircle_cdf(w: float, lam):
    """CDF of the unit-mass semicircle on [-2w, 2w]."""
    if not (math.isfinite(w) and w > 0):
        raise ValidationError(f"w must be positive, got {w!r}")
    u = np.clip(np.asarray(lam, dtype=np.float64) / (2.0 * w), -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / np.pi


def semicircle_mass(w: float, lo: float, hi: float) -> float:
    return float(semicircle_cdf(w, hi) - semicircle_cdf(w, lo))


@dataclass(frozen=True)
class GaussianLaw:
    a: float
    sigma: float  # variance

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"variance must be non-negative, got {self.sigma!r}")

    @property
    def mean(self) -> float:
        return self.a

    @property
    def variance(self) -> float:
        return self.sigma

    def cdf(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        if self.sigma > 0:
            return ndtr((lam - self.a) / math.sqrt(self.sigma))
        return (lam >= self.a).astype(np.float64)

    def cdf_left(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        if self.sigma > 0:
            return self.cdf(lam)
        return (lam > self.a).astype(np.float64)


def limit_law_iid(kappa: float, w: float, t: float) -> GaussianLaw:
    return GaussianLaw(mean_iid(kappa, t), var_iid(kappa, w, t))


def limit_law_sym(kappa: float, w: float, t: float) -> GaussianLaw:
    return GaussianLaw(mean_sym(kappa, w, t), var_sym(kappa, w, t))


# Below this ratio of uniform half-width to gaussian scale, the closed form
# for the uniform mixture cancels badly; the integrand is smooth there.
_UNIFORM_CLOSED_FORM_MIN_RATIO = 1e-3
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class MixtureLaw:
    """Law of ``xi_scale * xi + z_scale * z`` with z standard normal, xi ~ xi_law."""

    xi_scale: float
    z_scale: float
    xi_law: InitialLaw

    def __post_init__(self):
        if self.xi_law.kind != "iid":
            raise ValidationError("mixture laws need an i.i.d. initial law")
        if not self.z_scale >= 0:
            raise ValidationError("z_scale must be non-negative")

    @property
    def mean(self) -> float:
        return self.xi_scale * self.xi_law.a0

    @property
    def variance(self) -> float:
        return (self.xi_scale * self.xi_law.sd) ** 2 + self.z_scale ** 2

    def cdf(self, lam):
        return mixture_cdf(self, lam)

    def cdf_left(self, lam):
        return mixture_cdf(self, lam, left=True)


def _step(x, left: bool):
    return (x > 0).astype(np.float64) if left else (x >= 0).astype(np.float64)


def _gauss_antiderivative(v):
    # integral of Phi: v Phi(v) + phi(v)
    return v * ndtr(v) + np.exp(-0.5 * v * v) / math.sqrt(2 * math.pi)


def mixture_cdf(law: MixtureLaw, lam, left: bool = False):
    """CDF of the mixture; ``left=True`` gives the left limit (differs only at atoms).

    Discrete xi is an exact two-term sum and gaussian xi collapses to a
    gaussian. Uniform xi integrates Phi in closed form, switching to
    64-point Gauss-Legendre when the gaussian part dominates.
    """
    lam = np.asarray(lam, dtype=np.float64)
    xi = law.xi_law
    c, b = law.xi_scale, law.z_scale
    centre = c * xi.a0
    spread = abs(c) * xi.sd
    d = lam - centre

    if xi.family is Family.RADEMACHER:
        lo, hi = d + spread, d - spread
        if b > 0:
            return 0.5 * (ndtr(lo / b) + ndtr(hi / b))
        return 0.5 * (_step(lo, left) + _step(hi, left))

    if xi.family is Family.GAUSSIAN:
        total = math.hypot(spread, b)
        if total > 0:
            return ndtr(d / total)
        return _step(d, left)

    half = spread * math.sqrt(3.0)
    if b == 0:
        if half == 0:
            return _step(d, left)
        return np.clip((d + half) / (2 * half), 0.0, 1.0)
    if half >= _UNIFORM_CLOSED_FORM_MIN_RATIO * b:
        g = _gauss_antiderivative((d + half) / b) - _gauss_antiderivative((d - half) / b)
        return np.clip(b * g / (2 * half), 0.0, 1.0)
    u = half * _GL_NODES
    vals = ndtr((d[..., None] - u) / b)
    return vals @ _GL_WEIGHTS / 2.0


def mixture_law(kappa: float, w: float, t: float, xi_law: InitialLaw, symmetric: bool) -> MixtureLaw:
    if xi_law.kind != "iid":
        raise ValidationError("random-initial-data limit needs an i.i.d. initial law, not 'ones'")
    if symmetric:
        return MixtureLaw(mean_sym(kappa, w, t), xi_law.w0 * math.sqrt(var_sym(kappa, w, t)), xi_law)
    return MixtureLaw(mean_iid(kappa, t), xi_law.w0 * math.sqrt(var_iid(kappa, w, t)), xi_law)


class Verdict(str, Enum):
    STABLE = "stable"
    CRITICALLY_STABLE = "critically_stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: Verdict
    kappa_c: float
    sigma_limit: float  # math.inf when sigma(t) grows without bound

    def describe(self) -> str:
        if self.verdict is Verdict.UNSTABLE:
            return "sigma(t) grows like exp(2(w-kappa)t)/sqrt(4 pi w t)"
        if self.verdict is Verdict.CRITICALLY_STABLE:
            return "sigma(t) decays like 1/sqrt(4 pi w t)"
        return "sigma(t) decays like exp(-2(kappa-w)t)/sqrt(4 pi w t)"


def classify_stability(kappa: float, w: float) -> StabilityVerdict:
    if not (math.isfinite(w) and w > 0):
        raise ValidationError(f"w must be positive, got {w!r}")
    if not math.isfinite(kappa):
        raise ValidationError("kappa must be finite")
    if kappa < w:
        return StabilityVerdict(Verdict.UNSTABLE, w, math.inf)
    if kappa == w:
        return StabilityVerdict(Verdict.CRITICALLY_STABLE, w, 0.0)
    return StabilityVerdict(Verdict.STABLE, w, 0.0)


def critical_asymptote(w: float, t: float) -> float:
    """Leading behaviour of sigma(t) at kappa = w."""
    return 1.0 / math.sqrt(4.0 * math.pi * w * t)
