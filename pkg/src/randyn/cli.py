"""Command-line front end: ``randyn predict|verify|classify|spectrum``.

Exit codes: 0 success / all checks pass, 1 a check failed (or, for
``classify``, the system is unstable), 2 usage or config error, 3 runtime
failure. CSVs are comma separated with one header row, ``\\n`` line endings
and floats printed with 17 significant digits, so equal inputs give equal
bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__, _kernels, harness, laws
from .config import ConfigError, load
from .ensembles import InitialLaw
from .errors import ValidationError

log = logging.getLogger("randyn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

REPORT_HEADER = ["t", "law", "pred_mean", "pred_var", "emp_mean", "mean_se", "mean_z",
                 "emp_var", "var_se", "var_z", "moment_se_max", "ks", "ks_max",
                 "ks_pass", "moments_pass", "n_effective", "excluded_replicas", "status"]
CHECKS_HEADER = ["check", "t", "s", "lambda", "measured", "reference", "se", "z",
                 "threshold", "status"]
SELFAVG_HEADER = ["n", "lambda", "t", "replicas", "replica_variance", "limit_cdf", "eligible"]
NORMS_HEADER = ["replica", "norm"]
HIST_HEADER = ["bin_left", "bin_right", "count"]


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):  # numpy scalar
        return fmt(v.item())
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class UsageError(Exception):
    pass


def _float_arg(s: str) -> float:
    try:
        x = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"not a finite number: {s!r}")
    return x


def _times_arg(s: str) -> list:
    return [_float_arg(p) for p in s.split(",") if p.strip()]


def _seed_arg(s: str) -> int:
    try:
        x = int(s, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if not 0 <= x < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return x


# -- predict ----------------------------------------------------------------


def cmd_predict(args) -> int:
    times = [t for group in args.t for t in group]
    if any(t < 0 for t in times):
        raise UsageError("--t values must be non-negative")
    if args.w <= 0:
        raise UsageError("--w must be positive")
    mixture = any(v is not None for v in (args.xi_family, args.xi_a0, args.xi_w0sq))
    xi = None
    if mixture:
        try:
            xi = InitialLaw("iid", args.xi_family or "gaussian",
                            0.0 if args.xi_a0 is None else args.xi_a0,
                            1.0 if args.xi_w0sq is None else args.xi_w0sq)
        except ValidationError as exc:
            raise UsageError(str(exc)) from None
    sym = args.mode == "sym"
    header = ["t", "a", "sigma"] + (["xi_scale", "z_scale"] if mixture else [])
    rows = []
    for t in times:
        if sym:
            row = [t, laws.mean_sym(args.kappa, args.w, t), laws.var_sym(args.kappa, args.w, t)]
        else:
            row = [t, laws.mean_iid(args.kappa, t), laws.var_iid(args.kappa, args.w, t)]
        if mixture:
            m = laws.mixture_law(args.kappa, args.w, t, xi, sym)
            row += [m.xi_scale, m.z_scale]
        rows.append(row)
    sys.stdout.write(csv_text(header, rows))
    return EXIT_OK


# -- classify ---------------------------------------------------------------


def cmd_classify(args) -> int:
    try:
        v = laws.classify_stability(args.kappa, args.w)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    print(f"{v.verdict.value} kappa_c={fmt(v.kappa_c)} {v.describe()}")
    return EXIT_FAIL if v.verdict is laws.Verdict.UNSTABLE else EXIT_OK


# -- verify -----------------------------------------------------------------


def _report_rows(report):
    for r in report.rows:
        yield [r.t, r.law, r.pred_mean, r.pred_var, r.emp_mean, r.mean_se, r.mean_z,
               r.emp_var, r.var_se, r.var_z, r.moment_se_max, r.ks, r.ks_max,
               r.ks_pass, r.moments_pass, r.n_effective, r.excluded_replicas, r.status]


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _check_rows(report):
    nan = math.nan
    for r in report.identity:
        yield ["identity", r.t, 2 * r.t, nan, r.second_moment_t, r.mean_2t, r.combined_se,
               r.z, r.se_max, _status(r.passed)]
    for r in report.covariance:
        yield ["covariance", r.t, r.s, nan, r.empirical, r.predicted, r.se, r.z,
               r.se_max, _status(r.passed)]
    if report.selfavg is not None:
        for v in report.selfavg.verdicts:
            st = _status(v.passed) if v.eligible else "skipped"
            yield ["self_averaging", v.t, nan, v.lam, v.var_large_n, v.var_small_n, nan,
                   nan, v.factor, st]
    nt = report.norms
    if nt is not None:
        st = _status(nt.passed) if nt.asserted else "reported"
        if nt.symmetric:
            yield ["norm_tail_2w", nan, nan, nan, nt.fraction_above_2w_plus_eps,
                   2 * nt.w + nt.eps, nan, nan, 0.0, st]
        else:
            yield ["norm_tail_4w", nan, nan, nan, nt.fraction_above_4w_plus_eps,
                   4 * nt.w + nt.eps, nan, nan, 0.0, st]


def _selfavg_rows(report):
    if report.selfavg is None:
        return
    for r in report.selfavg.rows:
        yield [r.n, r.lam, r.t, r.replicas, r.replica_variance, r.limit_cdf, r.eligible]


def _norm_rows(norms):
    for i, x in enumerate(norms):
        yield [i, float(x)]


def _summary(cfg, report, workers: int) -> str:
    plan = report.plan
    ens = plan.ensemble
    lines = [
        f"result: {'PASS' if report.passed else 'FAIL'}",
        f"mode: {cfg.mode}",
        f"ensemble: n={ens.n} symmetric={fmt(ens.symmetric)} entries={ens.entry_law.family.value} "
        f"w={fmt(plan.w)} initial={ens.initial_law.kind}",
        f"kappa: {fmt(plan.kappa)}",
        f"replicas: {plan.replicas}",
        f"master_seed: {plan.master_seed}",
        f"version: {__version__} backend={_kernels.BACKEND} workers={workers}",
    ]
    for r in report.rows:
        lines.append(
            f"t={fmt(r.t)}: {r.status} ks={r.ks:.4g} (max {r.ks_max:g}) "
            f"mean z={r.mean_z:.3g} var z={r.var_z:.3g} (max {r.moment_se_max:g})"
        )
        if r.excluded_replicas:
            lines.append(f"t={fmt(r.t)}: excluded {r.excluded_replicas} replicas flagged for overflow")
    for r in report.identity:
        lines.append(f"identity t={fmt(r.t)}: residual={r.residual:.3g} se={r.combined_se:.3g} "
                     f"max per-replica residual={r.max_replica_residual:.3g} {_status(r.passed)}")
    for r in report.covariance:
        lines.append(f"covariance ({fmt(r.t)},{fmt(r.s)}): {r.empirical:.6g} vs {r.predicted:.6g} "
                     f"z={r.z:.3g} {_status(r.passed)}")
    if report.selfavg is not None:
        for v in report.selfavg.verdicts:
            st = _status(v.passed) if v.eligible else "skipped (limit cdf outside band)"
            lines.append(f"self-averaging lambda={v.lam:.6g} t={fmt(v.t)}: variance ratio "
                         f"{v.ratio:.3g} (need >= {v.factor:g}) {st}")
    nt = report.norms
    if nt is not None:
        lines.append(f"norms: max={max(nt.norms):.6g} non_converged={nt.non_converged} "
                     f"frac>2w+eps={nt.fraction_above_2w_plus_eps:g} "
                     f"frac>4w+eps={nt.fraction_above_4w_plus_eps:g}"
                     + ("" if nt.asserted else f" (n < {harness.NORM_CLAIM_MIN_N}: reported only)"))
    for stage, sec in report.stage_seconds.items():
        lines.append(f"seconds.{stage}: {sec:.2f}")
    return "\n".join(lines) + "\n"


RUNNERS = {
    "theorem1": harness.run_theorem1,
    "theorem2": harness.run_theorem2,
    "theorem4": harness.run_theorem4,
}


def _prepare_outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def cmd_verify(args) -> int:
    try:
        cfg = load(args.config, args.seed)
        harness.check_overflow_cap(cfg.plan)
        workers = harness.worker_count()
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_outdir(args.out_dir)
    summary = out / "summary.txt"
    write_atomic(summary, "INCOMPLETE: run in progress\n")
    try:
        t0 = time.perf_counter()
        report = RUNNERS[cfg.mode](cfg.plan, workers)
        log.info("verify finished in %.1f s", time.perf_counter() - t0)
        norms = report.norms.norms if report.norms is not None else []
        write_atomic(out / "report.csv", csv_text(REPORT_HEADER, _report_rows(report)))
        write_atomic(out / "checks.csv", csv_text(CHECKS_HEADER, _check_rows(report)))
        write_atomic(out / "selfavg.csv", csv_text(SELFAVG_HEADER, _selfavg_rows(report)))
        write_atomic(out / "norms.csv", csv_text(NORMS_HEADER, _norm_rows(norms)))
        write_atomic(summary, _summary(cfg, report, workers))
    except Exception as exc:
        log.exception("verify failed")
        write_atomic(summary, f"INCOMPLETE: runtime failure: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    print(f"{'PASS' if report.passed else 'FAIL'} {cfg.mode}: see {summary}")
    return EXIT_OK if report.passed else EXIT_FAIL


# -- spectrum ---------------------------------------------------------------


def cmd_spectrum(args) -> int:
    try:
        cfg = load(args.config, args.seed)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_outdir(args.out_dir)
    try:
        res = harness.spectrum(cfg.plan)
        write_atomic(out / "norms.csv", csv_text(NORMS_HEADER, _norm_rows(res.norms)))
        if res.symmetric:
            e = res.edges
            rows = ([float(e[k]), float(e[k + 1]), int(c)] for k, c in enumerate(res.counts))
            write_atomic(out / "hist.csv", csv_text(HIST_HEADER, rows))
    except Exception:
        log.exception("spectrum failed")
        write_atomic(out / "norms.csv.INCOMPLETE", "INCOMPLETE: runtime failure\n")
        return EXIT_RUNTIME
    msg = f"n={res.n} replicas={len(res.norms)} max_norm={max(res.norms):.6g}"
    if res.symmetric:
        mass = laws.semicircle_mass(res.w, -res.w, res.w)
        msg += f" fraction_in[-w,w]={res.inner_fraction:.4f} semicircle={mass:.4f}"
    print(msg)
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randyn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    seed_help = "override the config seed (accepted everywhere; predict and classify are deterministic)"

    pr = sub.add_parser("predict", help="closed-form limit laws as CSV on stdout")
    pr.add_argument("--mode", choices=("iid", "sym"), required=True)
    pr.add_argument("--kappa", type=_float_arg, required=True)
    pr.add_argument("--w", type=_float_arg, required=True)
    pr.add_argument("--t", type=_times_arg, nargs="+", required=True,
                    help="times, space or comma separated")
    pr.add_argument("--xi-family", choices=("gaussian", "rademacher", "uniform"))
    pr.add_argument("--xi-a0", type=_float_arg)
    pr.add_argument("--xi-w0sq", type=_float_arg)
    pr.add_argument("--seed", type=_seed_arg, help=seed_help)
    pr.set_defaults(func=cmd_predict)

    ve = sub.add_parser("verify", help="run a Monte Carlo check from a config file")
    ve.add_argument("config")
    ve.add_argument("out_dir")
    ve.add_argument("--seed", type=_seed_arg, help=seed_help)
    ve.set_defaults(func=cmd_verify)

    cl = sub.add_parser("classify", help="stability verdict for (kappa, w)")
    cl.add_argument("--kappa", type=_float_arg, required=True)
    cl.add_argument("--w", type=_float_arg, required=True)
    cl.add_argument("--seed", type=_seed_arg, help=seed_help)
    cl.set_defaults(func=cmd_classify)

    sp = sub.add_parser("spectrum", help="operator norms and eigenvalue histogram")
    sp.add_argument("config")
    sp.add_argument("-o", "--out-dir", default=".")
    sp.add_argument("--seed", type=_seed_arg, help=seed_help)
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"randyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
