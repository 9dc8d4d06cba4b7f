"""Acceptance criteria 1-11 at their stated sizes and tolerances.

The Monte Carlo criteria run at desk scale (n = 2000, 100 replicas) and
take most of the suite's runtime. Each criterion reports one PASS/FAIL line
in the terminal summary.
"""
import math
import time

import mpmath
import numpy as np
import pytest
from scipy.linalg import expm

from randyn import harness, laws
from randyn.cli import main
from randyn.ensembles import EntryLaw, EnsembleSpec, InitialLaw
from randyn.propagator import SystemConfig, evolve, expm_action

from conftest import ACCEPTANCE_LINES

KS_MAX = 0.02
MASTER_SEED = 20240601


def record(k, ok, detail):
    ACCEPTANCE_LINES.append((k, bool(ok), detail))
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {k}: {detail}"


def _plan(family="gaussian", symmetric=False, initial=InitialLaw(), times=(0.5, 1.0, 2.0),
          replicas=100, n=2000, **kw):
    ens = EnsembleSpec(n, symmetric, EntryLaw(family, 1.0), initial)
    return harness.ExperimentPlan(ens, 0.0, times, replicas=replicas, master_seed=MASTER_SEED, **kw)


def _describe_rows(rows):
    return "; ".join(f"t={r.t:g} ks={r.ks:.4f} var_z={r.var_z:.2f}" for r in rows)


# -- 1 ----------------------------------------------------------------------


def test_criterion_01_closed_forms():
    ts = (0.1, 0.5, 1, 2, 5, 10, 20)
    start = time.perf_counter()
    worst = 0.0
    for t in ts:
        ref_var = mpmath.besseli(0, 2 * mpmath.mpf(t)) - 1
        ref_mean = mpmath.besseli(1, 2 * mpmath.mpf(t)) / t
        worst = max(worst,
                    abs(laws.var_iid(0, 1, t) / float(ref_var) - 1),
                    abs(laws.mean_sym(0, 1, t) / float(ref_mean) - 1))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 1.0,
           f"max relative error {worst:.2e} (<= 1e-12), {elapsed * 1e3:.0f} ms")


# -- 2, 3, 7 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def theorem1_gaussian():
    plan = _plan(covariance_pairs=((1.0, 2.0),))
    return harness.run_theorem1(plan)


def _theorem1_ok(report):
    return all(r.ks <= KS_MAX and r.var_z <= 3.0 for r in report.rows)


def test_criterion_02_theorem1(theorem1_gaussian):
    r = theorem1_gaussian
    assert all(row.n_effective == 200_000 for row in r.rows)
    record(2, _theorem1_ok(r), "gaussian n=2000 R=100: " + _describe_rows(r.rows))


@pytest.mark.parametrize("family", ["rademacher", "uniform"])
def test_criterion_03_universality(family):
    r = harness.run_theorem1(_plan(family))
    record(3, _theorem1_ok(r), f"{family}: " + _describe_rows(r.rows))


def test_criterion_07_covariance(theorem1_gaussian):
    row = theorem1_gaussian.covariance[0]
    assert row.predicted == pytest.approx(4.252350879502623825, rel=1e-14)
    record(7, row.z <= 4.0,
           f"R(1,2) = {row.empirical:.4f} +- {row.se:.4f} vs I0(2 sqrt 2) = {row.predicted:.4f}, z={row.z:.2f}")


# -- 4 ----------------------------------------------------------------------


def test_criterion_04_theorem2():
    r = harness.run_theorem2(_plan(symmetric=True))
    ks_ok = all(row.ks <= KS_MAX for row in r.rows)
    ident = {row.t: row for row in r.identity}
    id_ok = set(ident) == {0.5, 1.0} and all(row.passed for row in ident.values())
    detail = "; ".join(f"t={row.t:g} ks={row.ks:.4f}" for row in r.rows)
    detail += "; " + "; ".join(f"identity t={t:g} z={row.z:.2f}" for t, row in sorted(ident.items()))
    record(4, ks_ok and id_ok, detail)


# -- 5 ----------------------------------------------------------------------


@pytest.mark.parametrize("symmetric", [False, True], ids=["general", "symmetric"])
@pytest.mark.parametrize("xi_family", ["gaussian", "rademacher"])
def test_criterion_05_theorem4(symmetric, xi_family):
    xi = InitialLaw("iid", xi_family, 0.0, 1.0)
    r = harness.run_theorem4(_plan(symmetric=symmetric, initial=xi, times=(1.0,)))
    row = r.rows[0]
    mode = "symmetric" if symmetric else "general"
    record(5, row.ks <= KS_MAX, f"{mode} xi={xi_family}: ks={row.ks:.4f}")


# -- 6 ----------------------------------------------------------------------

SWEEPS = 20
SWEEP_REPLICAS = 100  # per dimension; at 30 the 19-of-20 rule itself fails ~14% of the time


def test_criterion_06_self_averaging():
    passed = 0
    ratios = []
    for k in range(SWEEPS):
        plan = harness.ExperimentPlan(
            EnsembleSpec(1000, False, EntryLaw("gaussian", 1.0)), 0.0, (1.0,),
            replicas=SWEEP_REPLICAS, n_sweep=(250, 1000), master_seed=MASTER_SEED + 1000 + k,
        )
        v = harness.self_averaging_sweep(plan).verdicts[0]
        assert v.lam == 1.0 and v.eligible
        ratios.append(v.ratio)
        passed += v.passed
    record(6, passed >= math.ceil(0.95 * SWEEPS),
           f"{passed}/{SWEEPS} sweeps with var(n=1000) <= var(n=250)/2; "
           f"variance ratios min {min(ratios):.2f} median {np.median(ratios):.2f}")


# -- 8 ----------------------------------------------------------------------


def test_criterion_08_stability():
    expected = {0.5: laws.Verdict.UNSTABLE, 1.0: laws.Verdict.CRITICALLY_STABLE, 1.5: laws.Verdict.STABLE}
    verdicts = {k: laws.classify_stability(k, 1.0).verdict for k in expected}
    t = 1e3
    ratio = laws.var_iid(1.0, 1.0, t) / laws.critical_asymptote(1.0, t)
    ok = verdicts == expected and abs(ratio - 1) <= 0.05
    record(8, ok, ", ".join(f"kappa={k:g}: {v.value}" for k, v in verdicts.items())
           + f"; sigma(1000)/asymptote = {ratio:.6f}")


# -- 9 ----------------------------------------------------------------------


@pytest.mark.parametrize("symmetric", [True, False], ids=["symmetric", "general"])
def test_criterion_09_norms(symmetric):
    plan = _plan(symmetric=symmetric, n=1000, replicas=30, times=(1.0,))
    nt = harness.norm_tail_check(plan)
    level = 2.25 if symmetric else 4.25
    frac = nt.fraction_above_2w_plus_eps if symmetric else nt.fraction_above_4w_plus_eps
    record(9, nt.asserted and nt.passed and frac == 0,
           f"{'symmetric' if symmetric else 'general'} n=1000: max norm {max(nt.norms):.4f}, "
           f"exceedances of {level:g}: {frac:g}, non-converged {nt.non_converged}")


# -- 10 ---------------------------------------------------------------------

DETERMINISM_CONFIG = """\
mode = theorem1
n = 300
times = 0.5, 1, 2
replicas = 8
n_sweep = 100, 300
covariance_pairs = 1:2
norm_check = true
seed = 31
"""


def test_criterion_10_determinism(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(DETERMINISM_CONFIG)
    outputs = {}
    for workers in ("1", "2", "3"):
        monkeypatch.setenv("RANDYN_WORKERS", workers)
        out = tmp_path / f"w{workers}"
        code = main(["verify", str(cfg), str(out)])
        assert code in (0, 1)
        outputs[workers] = {f: (out / f).read_bytes() for f in
                            ("report.csv", "checks.csv", "selfavg.csv", "norms.csv")}
    capsys.readouterr()
    same = outputs["1"] == outputs["2"] == outputs["3"]
    record(10, same, "verify CSVs byte-identical for RANDYN_WORKERS in {1, 2, 3}")


# -- 11 ---------------------------------------------------------------------


def test_criterion_11_propagator():
    rng = np.random.default_rng(MASTER_SEED)
    tol = 1e-10
    worst = 0.0
    worst_semigroup = 0.0
    worst_linear = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        w = rng.uniform(0.2, 2.0)
        kappa = rng.uniform(0.0, 2.0)
        A = rng.standard_normal((n, n)) * w / math.sqrt(n)
        if rng.random() < 0.5:
            A = (A + A.T) / math.sqrt(2)
        x0 = rng.standard_normal(n)
        times = tuple(np.sort(rng.uniform(0.0, 5.0, 3)))
        for f in evolve(A, x0, SystemConfig(kappa, times, tol)):
            ref = expm(f.t * (A - kappa * np.eye(n))) @ x0
            worst = max(worst, np.linalg.norm(f.x - ref) / np.linalg.norm(ref))

        t, s = rng.uniform(0.0, 3.0, 2)
        one = expm_action(A, x0, t + s, tol)
        two = expm_action(A, expm_action(A, x0, s, tol), t, tol)
        worst_semigroup = max(worst_semigroup, np.linalg.norm(one - two) / max(1.0, np.linalg.norm(one)))

        u = rng.standard_normal(n)
        a, b = rng.uniform(-2, 2, 2)
        lhs = expm_action(A, a * x0 + b * u, t, tol)
        rhs = a * expm_action(A, x0, t, tol) + b * expm_action(A, u, t, tol)
        scale = max(1.0, np.linalg.norm(a * expm_action(A, x0, t)), np.linalg.norm(b * expm_action(A, u, t)))
        worst_linear = max(worst_linear, np.linalg.norm(lhs - rhs) / scale)
    ok = worst <= 1e-8 and worst_semigroup <= 10 * tol and worst_linear <= 10 * tol
    record(11, ok, f"max rel error vs dense expm {worst:.1e}; semigroup {worst_semigroup:.1e}; "
                   f"linearity {worst_linear:.1e} (limit {10 * tol:.0e})")
