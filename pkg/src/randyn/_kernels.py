"""Hot inner loops, compiled with numba when available.

Every kernel has a plain numpy implementation. The numba versions are the
same source run through ``njit`` (or a loop formulation where numpy would
need temporaries). Set ``RANDYN_DISABLE_NUMBA=1`` to force the numpy path;
the choice is made once, at import time.

The dense products go through BLAS on both paths, so the compiled versions
mostly remove interpreter overhead. That matters for small systems and for
the many short substeps of the exponential action; at n in the thousands
both paths are memory bound and run at the same speed.
"""
from __future__ import annotations

import os

import numpy as np

# |x| above this is treated as overflow; leaves headroom for one more product.
OVERFLOW_LIMIT = 1e300


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


def taylor_substeps_py(B, v, h, steps, order, step_tol):
    """Advance ``v`` by ``steps`` truncated-Taylor steps of size ``h``.

    Returns ``(x, status, matvecs)``; status 1 means the iterate overflowed.
    A step stops adding terms early once two consecutive terms are below
    ``step_tol`` relative to the running sum.
    """
    x = v.copy()
    matvecs = 0
    for _ in range(steps):
        acc = x.copy()
        term = x
        prev = np.max(np.abs(x))
        for k in range(1, order + 1):
            term = np.dot(B, term) * (h / k)
            matvecs += 1
            acc += term
            cur = np.max(np.abs(term))
            if prev + cur <= step_tol * np.max(np.abs(acc)):
                break
            prev = cur
        x = acc
        big = np.max(np.abs(x))
        if not np.isfinite(big) or big > OVERFLOW_LIMIT:
            return x, 1, matvecs
    return x, 0, matvecs


def power_iteration_ata_py(A, x0, tol, max_iter):
    """Power iteration on A^T A. Returns ``(rayleigh, iterations, converged)``."""
    x = x0 / np.sqrt(np.dot(x0, x0))
    lam_old = 0.0
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = np.dot(A, x)
        lam = np.dot(y, y)
        z = np.dot(A.T, y)
        nz = np.sqrt(np.dot(z, z))
        if nz == 0.0:
            return lam, it, True
        x = z / nz
        if abs(lam - lam_old) < tol * lam:
            return lam, it, True
        lam_old = lam
    return lam, max_iter, False


def ks_sup_py(x, F, F_left):
    """sup |F_n - F| for sorted samples ``x`` given F and its left limits there."""
    n = x.size
    starts = np.flatnonzero(np.concatenate(([True], x[1:] != x[:-1])))
    ends = np.concatenate((starts[1:], [n]))
    upper = np.abs(ends / n - F[starts]).max()
    lower = np.abs(starts / n - F_left[starts]).max()
    return float(max(upper, lower))


def _ks_sup_loop(x, F, F_left):
    n = x.size
    d = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[j + 1] == x[i]:
            j += 1
        hi = abs((j + 1) / n - F[i])
        lo = abs(i / n - F_left[i])
        if hi > d:
            d = hi
        if lo > d:
            d = lo
        i = j + 1
    return d


HAVE_NUMBA = False
if not _flag("RANDYN_DISABLE_NUMBA"):
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
    if njit is not None:
        HAVE_NUMBA = True
        taylor_substeps_nb = njit(cache=True)(taylor_substeps_py)
        power_iteration_ata_nb = njit(cache=True)(power_iteration_ata_py)
        ks_sup_nb = njit(cache=True)(_ks_sup_loop)

BACKEND = "numba" if HAVE_NUMBA else "numpy"

if HAVE_NUMBA:
    taylor_substeps = taylor_substeps_nb
    power_iteration_ata = power_iteration_ata_nb
    ks_sup = ks_sup_nb
else:
    taylor_substeps = taylor_substeps_py
    power_iteration_ata = power_iteration_ata_py
    ks_sup = ks_sup_py
