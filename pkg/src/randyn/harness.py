"""Monte Carlo verification of the limit laws.

Each replica is one draw of (A, x(0)) from seeds derived from the master
seed and the replica index, evolved on the plan's time grid. Replicas run
in a process pool (``RANDYN_WORKERS``, default: all cores); results are
folded in replica order, so reports do not depend on the worker count.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import laws
from .empirics import (
    ReplicaPanel,
    covariance_with_se,
    ks_distance,
    pooled_moments,
    replica_counts,
)
from .ensembles import EnsembleSpec, replica_seed, sample_initial, sample_matrix
from .errors import NormNotConvergedError, PlanRefused, ValidationError
from .propagator import DEFAULT_TOL, SystemConfig, TrajectoryFrame, evolve, operator_norm

log = logging.getLogger(__name__)

# Coordinates must stay below exp(LOG_RANGE); leaves room for squares in moments.
LOG_RANGE = math.log(1e150)
# Below this dimension the norm concentration is not asserted, only reported.
NORM_CLAIM_MIN_N = 100
NORM_TOL = 1e-6
# (lambda, t) pairs whose limit CDF is outside this band are degenerate
# Bernoulli counts and do not enter the self-averaging verdict.
SELFAVG_ELIGIBLE = (0.05, 0.95)


def worker_count() -> int:
    raw = os.environ.get("RANDYN_WORKERS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"RANDYN_WORKERS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"RANDYN_WORKERS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class Thresholds:
    ks_max: float = 0.02
    variance_decay_min_factor: float = 2.0
    moment_se: float = 3.0
    identity_se: float = 4.0
    covariance_se: float = 4.0
    norm_eps_factor: float = 0.25


@dataclass(frozen=True)
class ExperimentPlan:
    ensemble: EnsembleSpec
    kappa: float = 0.0
    times: tuple = (1.0,)
    lambdas: tuple | None = None  # None: the predicted mean at each t
    replicas: int = 100
    n_sweep: tuple | None = None
    master_seed: int = 0
    thresholds: Thresholds = Thresholds()
    tol: float = DEFAULT_TOL
    covariance_pairs: tuple = ()
    norm_check: bool = False

    def __post_init__(self):
        if isinstance(self.replicas, bool) or int(self.replicas) != self.replicas or self.replicas < 1:
            raise ValidationError(f"replicas must be a positive integer, got {self.replicas!r}")
        if self.n_sweep is not None:
            sweep = tuple(int(n) for n in self.n_sweep)
            if any(n < 2 for n in sweep):
                raise ValidationError("n_sweep entries must be >= 2")
            if any(b <= a for a, b in zip(sweep, sweep[1:])):
                raise ValidationError("n_sweep entries must be strictly increasing")
            object.__setattr__(self, "n_sweep", sweep)
        if self.lambdas is not None:
            object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        pairs = tuple((float(t), float(s)) for t, s in self.covariance_pairs)
        object.__setattr__(self, "covariance_pairs", pairs)
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValidationError("master_seed must be a 64-bit unsigned integer")
        # validates times/kappa/tol
        object.__setattr__(self, "times", self.system().times)

    def system(self) -> SystemConfig:
        return SystemConfig(self.kappa, self.times, self.tol)

    @property
    def w(self) -> float:
        return self.ensemble.entry_law.w


def overflow_cap(plan: ExperimentPlan, n: int | None = None) -> float:
    """Largest time the planner accepts; math.inf when the dynamics do not grow.

    Coordinates grow like exp(g t) with g = w - kappa (general A) or
    2w - kappa (symmetric A, top of the semicircle); the cap keeps
    n * |x(0)| * exp(g t) inside the floating range.
    """
    n = plan.ensemble.n if n is None else n
    w = plan.w
    g = (2.0 * w if plan.ensemble.symmetric else w) - plan.kappa
    if g <= 0:
        return math.inf
    init = plan.ensemble.initial_law
    scale = 1.0 if init.kind == "ones" else abs(init.a0) + 10.0 * init.sd
    return (LOG_RANGE - math.log(n) - math.log(max(scale, 1.0))) / g


def check_overflow_cap(plan: ExperimentPlan) -> None:
    sizes = [plan.ensemble.n, *(plan.n_sweep or ())]
    cap = min(overflow_cap(plan, n) for n in sizes)
    t_max = max(plan.times)
    if t_max > cap:
        raise PlanRefused(
            f"t={t_max:g} exceeds the overflow cap t_max={cap:.6g} for kappa={plan.kappa:g}, "
            f"w={plan.w:g}, n={max(sizes)}: the state would leave the floating-point range; "
            f"shorten times or raise kappa"
        )


# -- replica execution ------------------------------------------------------


@dataclass
class ReplicaResult:
    x: np.ndarray  # (T, n)
    overflow: np.ndarray  # (T,)
    norm: float = math.nan
    norm_failed: bool = False


@dataclass(frozen=True)
class _ReplicaJob:
    ensemble: EnsembleSpec
    cfg: SystemConfig
    master_seed: int
    salt: tuple
    with_norm: bool
    with_frames: bool = True

    def __call__(self, index: int) -> ReplicaResult:
        spec = replace(self.ensemble, seed=replica_seed(self.master_seed, index, self.salt))
        A = sample_matrix(spec)
        if self.with_frames:
            frames = evolve(A, sample_initial(spec), self.cfg)
            x = np.array([f.x for f in frames])
            overflow = np.array([f.overflow for f in frames])
        else:
            x = np.empty((0, spec.n))
            overflow = np.empty(0, dtype=bool)
        res = ReplicaResult(x, overflow)
        if self.with_norm:
            try:
                res.norm = operator_norm(A, NORM_TOL, seed=spec.seed)
            except NormNotConvergedError:
                res.norm_failed = True
        return res


def run_replicas(job: Callable[[int], ReplicaResult], count: int, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or count <= 1:
        return [job(i) for i in range(count)]
    with ProcessPoolExecutor(max_workers=min(workers, count)) as pool:
        return list(pool.map(job, range(count)))


def simulate(
    plan: ExperimentPlan,
    n: int | None = None,
    salt: tuple = (),
    with_norm: bool = False,
    workers: int | None = None,
) -> tuple[ReplicaPanel, list[ReplicaResult]]:
    ensemble = plan.ensemble if n is None else replace(plan.ensemble, n=n)
    job = _ReplicaJob(ensemble, plan.system(), plan.master_seed, salt, with_norm)
    results = run_replicas(job, plan.replicas, workers)
    runs = [
        [TrajectoryFrame(t, r.x[k], bool(r.overflow[k])) for k, t in enumerate(plan.times)]
        for r in results
    ]
    return ReplicaPanel.from_frames(runs), results


# -- report types -----------------------------------------------------------


@dataclass
class TimeRow:
    t: float
    law: str
    pred_mean: float
    pred_var: float
    emp_mean: float
    mean_se: float
    emp_var: float
    var_se: float
    ks: float
    ks_max: float
    moment_se_max: float
    n_effective: int
    excluded_replicas: int
    status: str = "fail"

    @property
    def ks_pass(self) -> bool:
        return self.ks <= self.ks_max

    @property
    def mean_z(self) -> float:
        return _zscore(self.emp_mean, self.pred_mean, self.mean_se)

    @property
    def var_z(self) -> float:
        return _zscore(self.emp_var, self.pred_var, self.var_se)

    @property
    def moments_pass(self) -> bool:
        return self.mean_z <= self.moment_se_max and self.var_z <= self.moment_se_max


@dataclass
class IdentityRow:
    t: float
    second_moment_t: float
    mean_2t: float
    combined_se: float
    max_replica_residual: float
    se_max: float

    @property
    def residual(self) -> float:
        return self.second_moment_t - self.mean_2t

    @property
    def z(self) -> float:
        return _zscore(self.second_moment_t, self.mean_2t, self.combined_se)

    @property
    def passed(self) -> bool:
        return self.z <= self.se_max


@dataclass
class CovarianceRow:
    t: float
    s: float
    empirical: float
    se: float
    predicted: float
    se_max: float

    @property
    def z(self) -> float:
        return _zscore(self.empirical, self.predicted, self.se)

    @property
    def passed(self) -> bool:
        return self.z <= self.se_max


@dataclass
class SelfAvgRow:
    n: int
    lam: float
    t: float
    replicas: int
    replica_variance: float
    limit_cdf: float

    @property
    def eligible(self) -> bool:
        lo, hi = SELFAVG_ELIGIBLE
        return lo <= self.limit_cdf <= hi


@dataclass
class SelfAvgVerdict:
    lam: float
    t: float
    var_small_n: float
    var_large_n: float
    factor: float
    eligible: bool

    @property
    def ratio(self) -> float:
        if self.var_large_n == 0:
            return math.inf
        return self.var_small_n / self.var_large_n

    @property
    def passed(self) -> bool:
        return self.var_large_n <= self.var_small_n / self.factor


@dataclass
class SelfAvgTable:
    rows: list
    verdicts: list

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts if v.eligible)


@dataclass
class NormTail:
    symmetric: bool
    n: int
    w: float
    eps: float
    norms: list
    non_converged: int

    def _fraction_above(self, level: float) -> float:
        ok = [x for x in self.norms if not math.isnan(x)]
        if not ok:
            return math.nan
        return sum(x > level for x in ok) / len(ok)

    @property
    def fraction_above_2w_plus_eps(self) -> float:
        return self._fraction_above(2 * self.w + self.eps)

    @property
    def fraction_above_4w_plus_eps(self) -> float:
        return self._fraction_above(4 * self.w + self.eps)

    @property
    def asserted(self) -> bool:
        return self.n >= NORM_CLAIM_MIN_N

    @property
    def passed(self) -> bool:
        if not self.asserted:
            return True
        frac = self.fraction_above_2w_plus_eps if self.symmetric else self.fraction_above_4w_plus_eps
        return frac == 0 and self.non_converged == 0


@dataclass
class VerificationReport:
    theorem: str
    plan: ExperimentPlan
    rows: list = field(default_factory=list)
    identity: list = field(default_factory=list)
    covariance: list = field(default_factory=list)
    selfavg: SelfAvgTable | None = None
    norms: NormTail | None = None
    stage_seconds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = all(r.status != "fail" for r in self.rows)
        ok &= all(r.passed for r in self.identity)
        ok &= all(r.passed for r in self.covariance)
        if self.selfavg is not None:
            ok &= self.selfavg.passed
        if self.norms is not None:
            ok &= self.norms.passed
        return bool(ok)


def _zscore(value: float, target: float, se: float) -> float:
    diff = abs(value - target)
    if diff == 0:
        return 0.0
    if se == 0 or math.isnan(se):
        return math.inf
    return diff / se


# -- theorem checks ---------------------------------------------------------


def predicted_law(plan: ExperimentPlan, t: float):
    w, kappa = plan.w, plan.kappa
    init = plan.ensemble.initial_law
    if init.kind == "iid":
        return laws.mixture_law(kappa, w, t, init, plan.ensemble.symmetric)
    if plan.ensemble.symmetric:
        return laws.limit_law_sym(kappa, w, t)
    return laws.limit_law_iid(kappa, w, t)


def _time_rows(plan: ExperimentPlan, panel: ReplicaPanel) -> list:
    th = plan.thresholds
    rows = []
    for t in plan.times:
        law = predicted_law(plan, t)
        kind = "mixture" if isinstance(law, laws.MixtureLaw) else "gaussian"
        excluded = int(panel.overflow[:, panel.index(t)].sum())
        if excluded == panel.replicas:
            log.warning("t=%g: every replica overflowed; time is unverifiable", t)
            nan = math.nan
            rows.append(TimeRow(t, kind, law.mean, law.variance, nan, nan, nan, nan, nan,
                                th.ks_max, th.moment_se, 0, excluded, "unverifiable"))
            continue
        mom = pooled_moments(panel, t)
        ks = ks_distance(panel.measure(t), law.cdf, law.cdf_left)
        row = TimeRow(t, kind, law.mean, law.variance, mom.mean, mom.mean_se, mom.variance,
                      mom.variance_se, ks, th.ks_max, th.moment_se, mom.n_effective, excluded)
        row.status = "pass" if row.ks_pass and row.moments_pass else "fail"
        rows.append(row)
    return rows


def _require(plan: ExperimentPlan, symmetric: bool, initial: str, name: str) -> None:
    if plan.ensemble.symmetric != symmetric:
        raise ValidationError(f"{name} needs symmetric={symmetric}")
    if plan.ensemble.initial_law.kind != initial:
        raise ValidationError(f"{name} needs initial law {initial!r}")


def _run(plan: ExperimentPlan, theorem: str, workers: int | None) -> tuple[VerificationReport, ReplicaPanel]:
    check_overflow_cap(plan)
    report = VerificationReport(theorem, plan)
    t0 = time.perf_counter()
    panel, results = simulate(plan, with_norm=plan.norm_check, workers=workers)
    report.stage_seconds["simulate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    report.rows = _time_rows(plan, panel)
    report.stage_seconds["compare"] = time.perf_counter() - t0
    if plan.norm_check:
        report.norms = _norm_tail(plan, results)
    if plan.covariance_pairs:
        report.covariance = covariance_check(plan, plan.covariance_pairs, panel)
    if plan.n_sweep:
        t0 = time.perf_counter()
        report.selfavg = self_averaging_sweep(plan, workers)
        report.stage_seconds["self_averaging"] = time.perf_counter() - t0
    return report, panel


def run_theorem1(plan: ExperimentPlan, workers: int | None = None) -> VerificationReport:
    _require(plan, False, "ones", "theorem 1")
    return _run(plan, "theorem1", workers)[0]


def run_theorem2(plan: ExperimentPlan, workers: int | None = None) -> VerificationReport:
    _require(plan, True, "ones", "theorem 2")
    report, panel = _run(plan, "theorem2", workers)
    report.identity = identity_check(plan, panel)
    return report


def run_theorem4(plan: ExperimentPlan, workers: int | None = None) -> VerificationReport:
    if plan.ensemble.initial_law.kind != "iid":
        raise ValidationError("theorem 4 needs an i.i.d. initial law")
    return _run(plan, "theorem4", workers)[0]


def identity_check(plan: ExperimentPlan, panel: ReplicaPanel) -> list:
    """E{x_1(t)^2} against E{x_1(2t)} wherever both times are on the grid.

    For symmetric A and x(0) = (1, ..., 1) the per-replica averages agree
    exactly (1^T exp(2tA) 1 / n), for every kappa; the standard errors come
    from the two sides separately.
    """
    rows = []
    for t in plan.times:
        if 2 * t not in plan.times or t == 0:
            continue
        i, j = panel.index(t), panel.index(2 * t)
        ok = ~(panel.overflow[:, i] | panel.overflow[:, j])
        if ok.sum() < 2:
            continue
        sq = (panel.x[ok, i, :] ** 2).mean(axis=1)
        lin = panel.x[ok, j, :].mean(axis=1)
        R = sq.size
        se = math.sqrt(sq.var(ddof=1) / R + lin.var(ddof=1) / R)
        resid = float(np.max(np.abs(sq - lin)))
        rows.append(IdentityRow(t, float(sq.mean()), float(lin.mean()), se, resid,
                                plan.thresholds.identity_se))
    return rows


def covariance_check(plan: ExperimentPlan, pairs: Sequence, panel: ReplicaPanel | None = None) -> list:
    """Empirical R_n(t, s) against the series limit (kappa = 0, ones, general A)."""
    if plan.kappa != 0 or plan.ensemble.symmetric or plan.ensemble.initial_law.kind != "ones":
        raise ValidationError("the covariance limit is only known for kappa=0, general A, x(0)=ones")
    if panel is None:
        check_overflow_cap(plan)
        panel, _ = simulate(plan)
    rows = []
    for t, s in pairs:
        emp, se = covariance_with_se(panel, t, s)
        rows.append(CovarianceRow(t, s, emp, se, laws.covariance_iid(plan.w, t, s),
                                  plan.thresholds.covariance_se))
    return rows


def self_averaging_sweep(plan: ExperimentPlan, workers: int | None = None) -> SelfAvgTable:
    """Replica variance of N_n(lambda, t) for each n in the sweep.

    Passes when, at every eligible (lambda, t), the variance at the largest
    n is at most the variance at the smallest n divided by the decay
    factor. Points where the limit CDF is outside SELFAVG_ELIGIBLE are
    reported but not judged.
    """
    if not plan.n_sweep or len(plan.n_sweep) < 2:
        raise ValidationError("self-averaging needs n_sweep with at least two dimensions")
    if plan.replicas < 2:
        raise ValidationError("self-averaging needs at least 2 replicas per dimension")
    check_overflow_cap(plan)
    points = []
    for t in plan.times:
        law = predicted_law(plan, t)
        lams = plan.lambdas if plan.lambdas is not None else (law.mean,)
        for lam in lams:
            points.append((lam, t, float(law.cdf(lam))))
    rows = []
    by_n = {}
    for n in plan.n_sweep:
        panel, _ = simulate(plan, n=n, salt=(n,), workers=workers)
        for lam, t, F in points:
            counts = replica_counts(panel, lam, t)
            if counts.size < 2:
                raise ValidationError(f"fewer than 2 valid replicas at n={n}, t={t}")
            v = float(np.var(counts, ddof=1))
            rows.append(SelfAvgRow(n, lam, t, int(counts.size), v, F))
            by_n[(n, lam, t)] = v
    lo, hi = plan.n_sweep[0], plan.n_sweep[-1]
    factor = plan.thresholds.variance_decay_min_factor
    verdicts = []
    for lam, t, F in points:
        eligible = SELFAVG_ELIGIBLE[0] <= F <= SELFAVG_ELIGIBLE[1]
        verdicts.append(SelfAvgVerdict(lam, t, by_n[(lo, lam, t)], by_n[(hi, lam, t)], factor, eligible))
    return SelfAvgTable(rows, verdicts)


def _norm_tail(plan: ExperimentPlan, results: Sequence[ReplicaResult]) -> NormTail:
    norms = [r.norm for r in results]
    failed = sum(r.norm_failed for r in results)
    if failed:
        log.warning("%d of %d norm estimates did not converge", failed, len(results))
    return NormTail(plan.ensemble.symmetric, plan.ensemble.n, plan.w,
                    plan.thresholds.norm_eps_factor * plan.w, norms, failed)


def norm_tail_check(plan: ExperimentPlan, workers: int | None = None) -> NormTail:
    """Operator norms of the plan's replica matrices against 2w+eps and 4w+eps."""
    if plan.replicas < 30:
        raise ValidationError("norm tail check needs at least 30 replicas")
    job = _ReplicaJob(plan.ensemble, plan.system(), plan.master_seed, (), True, with_frames=False)
    return _norm_tail(plan, run_replicas(job, plan.replicas, workers))


# -- spectrum diagnostic ----------------------------------------------------

HIST_BINS = 64


@dataclass(frozen=True)
class _SpectrumJob:
    ensemble: EnsembleSpec
    master_seed: int
    edges: tuple  # histogram edges; empty for general matrices

    def __call__(self, index: int):
        spec = replace(self.ensemble, seed=replica_seed(self.master_seed, index))
        A = sample_matrix(spec)
        if not spec.symmetric:
            try:
                return operator_norm(A, NORM_TOL, seed=spec.seed), None, 0
            except NormNotConvergedError:
                return math.nan, None, 0
        ev = np.linalg.eigvalsh(A)
        w = spec.entry_law.w
        counts, _ = np.histogram(ev, bins=np.asarray(self.edges))
        inner = int(np.count_nonzero((ev >= -w) & (ev <= w)))
        return float(np.max(np.abs(ev))), counts, inner


@dataclass
class SpectrumResult:
    symmetric: bool
    n: int
    w: float
    norms: list
    edges: np.ndarray | None = None
    counts: np.ndarray | None = None
    inner: int = 0  # eigenvalues in [-w, w], all replicas

    @property
    def inner_fraction(self) -> float:
        if not self.symmetric:
            return math.nan
        return self.inner / (self.n * len(self.norms))


def spectrum(plan: ExperimentPlan, workers: int | None = None) -> SpectrumResult:
    """Operator norm of every replica matrix; for symmetric ensembles also the
    pooled eigenvalue histogram on [-2w-eps, 2w+eps].

    Symmetric norms are max |eigenvalue| from the dense eigensolver that
    the histogram needs anyway; general norms use power iteration.
    """
    ens = plan.ensemble
    w = plan.w
    edges = ()
    if ens.symmetric:
        r = 2 * w + plan.thresholds.norm_eps_factor * w
        edges = tuple(np.linspace(-r, r, HIST_BINS + 1))
    job = _SpectrumJob(ens, plan.master_seed, edges)
    out = run_replicas(job, plan.replicas, workers)
    norms = [o[0] for o in out]
    if any(math.isnan(x) for x in norms):
        log.warning("%d norm estimates did not converge", sum(math.isnan(x) for x in norms))
    if not ens.symmetric:
        return SpectrumResult(False, ens.n, w, norms)
    counts = np.sum([o[1] for o in out], axis=0)
    return SpectrumResult(True, ens.n, w, norms, np.asarray(edges), counts, sum(o[2] for o in out))
