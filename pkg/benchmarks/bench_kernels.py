"""Compiled (numba) against plain numpy kernels.

    python benchmarks/bench_kernels.py --sizes 8 64 250 1000

Each kernel is timed best-of-``--repeat`` after one warm-up call (which
also triggers compilation). Both paths call BLAS for the dense products,
so expect a large gap only at small n.
"""
import argparse
import time

import numpy as np

from randyn import _kernels


def best_of(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[8, 64, 250, 1000])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is disabled (RANDYN_DISABLE_NUMBA); nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'n':>7}{'numpy ms':>12}{'numba ms':>12}{'speedup':>9}")
    for n in args.sizes:
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        v = np.ones(n)
        norm1 = np.abs(A).sum(axis=0).max()
        steps = int(np.ceil(2.0 * norm1))
        h = 2.0 / steps
        cases = {
            "taylor_substeps": (
                lambda: _kernels.taylor_substeps_py(A, v, h, steps, 30, 1e-10 / steps),
                lambda: _kernels.taylor_substeps_nb(A, v, h, steps, 30, 1e-10 / steps),
            ),
            "power_iteration": (
                lambda: _kernels.power_iteration_ata_py(A, v + 0.1, 1e-6, 20000),
                lambda: _kernels.power_iteration_ata_nb(A, v + 0.1, 1e-6, 20000),
            ),
        }
        x = np.sort(rng.standard_normal(n * 200))
        F = 0.5 * (1 + np.tanh(x))
        cases["ks_sup"] = (lambda: _kernels.ks_sup_py(x, F, F), lambda: _kernels.ks_sup_nb(x, F, F))
        for name, (py, nb) in cases.items():
            t_py = best_of(py, args.repeat)
            t_nb = best_of(nb, args.repeat)
            print(f"{name:<18}{n:>7}{t_py * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_py / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
