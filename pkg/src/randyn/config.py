"""Flat ``key = value`` experiment configs.

Blank lines and ``#`` comments are ignored. Unknown or repeated keys are
errors, and every error names the line and the key.

    mode = theorem1            # theorem1 | theorem2 | theorem4
    n = 2000
    entry_family = gaussian    # gaussian | rademacher | uniform
    w = 1
    kappa = 0
    times = 0.5, 1, 2
    replicas = 100
    seed = 7
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .ensembles import EntryLaw, EnsembleSpec, Family, InitialLaw
from .errors import ValidationError
from .harness import ExperimentPlan, Thresholds
from .propagator import DEFAULT_TOL

MODES = ("theorem1", "theorem2", "theorem4")


class ConfigError(ValidationError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.key = key
        self.line = line


def _int(v: str) -> int:
    x = int(v, 10)
    return x


def _pos_int(v: str) -> int:
    x = int(v, 10)
    if x < 1:
        raise ValueError("must be a positive integer")
    return x


def _seed(v: str) -> int:
    x = int(v, 10)
    if not 0 <= x < 2 ** 64:
        raise ValueError("must be a 64-bit unsigned integer")
    return x


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be a finite number")
    return x


def _pos_float(v: str) -> float:
    x = _float(v)
    if x <= 0:
        raise ValueError("must be positive")
    return x


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be true or false")


def _float_list(v: str) -> tuple:
    items = [s for s in v.replace(",", " ").split() if s]
    if not items:
        raise ValueError("must list at least one number")
    return tuple(_float(s) for s in items)


def _int_list(v: str) -> tuple:
    items = [s for s in v.replace(",", " ").split() if s]
    if not items:
        raise ValueError("must list at least one integer")
    return tuple(_int(s) for s in items)


def _lambdas(v: str):
    if v.strip().lower() == "auto":
        return None
    return _float_list(v)


def _pairs(v: str) -> tuple:
    out = []
    for item in v.replace(",", " ").split():
        t, sep, s = item.partition(":")
        if not sep:
            raise ValueError("pairs are written t:s, separated by commas")
        out.append((_float(t), _float(s)))
    return tuple(out)


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return parse


def _family(v: str) -> str:
    return _choice(*(f.value for f in Family))(v)


KEYS = {
    "mode": _choice(*MODES),
    "n": _int,
    "symmetric": _bool,
    "entry_family": _family,
    "w": _pos_float,
    "initial": _choice("ones", "iid"),
    "xi_family": _family,
    "xi_a0": _float,
    "xi_w0sq": _pos_float,
    "kappa": _float,
    "times": _float_list,
    "lambdas": _lambdas,
    "replicas": _pos_int,
    "n_sweep": _int_list,
    "seed": _seed,
    "tol": _pos_float,
    "ks_max": _pos_float,
    "variance_decay_min_factor": _pos_float,
    "moment_se": _pos_float,
    "identity_se": _pos_float,
    "covariance_se": _pos_float,
    "norm_eps_factor": _pos_float,
    "covariance_pairs": _pairs,
    "norm_check": _bool,
}


@dataclass
class Config:
    mode: str
    plan: ExperimentPlan
    lines: dict  # key -> line number, for error reporting downstream


def parse_text(text: str) -> dict:
    """Parse into ``{key: (value, line)}``; values already typed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError("expected 'key = value'", key or None, lineno)
        if key not in KEYS:
            raise ConfigError("unknown key", key, lineno)
        if key in out:
            raise ConfigError(f"repeated key (first set on line {out[key][1]})", key, lineno)
        if not value:
            raise ConfigError("missing value", key, lineno)
        try:
            out[key] = (KEYS[key](value), lineno)
        except ValueError as exc:
            msg = str(exc)
            if msg.startswith("invalid literal") or msg.startswith("could not convert"):
                msg = f"cannot parse {value!r}"
            raise ConfigError(msg, key, lineno) from None
    return out


def build(values: dict, seed_override: int | None = None) -> Config:
    def get(key, default=None):
        return values[key][0] if key in values else default

    def line(key):
        return values[key][1] if key in values else None

    def fail(msg, key):
        raise ConfigError(msg, key, line(key))

    if "mode" not in values:
        raise ConfigError("required key is missing", "mode")
    if "n" not in values:
        raise ConfigError("required key is missing", "n")
    mode = get("mode")
    n = get("n")
    if n < 2:
        fail("must be an integer >= 2", "n")

    initial_kind = get("initial", "iid" if mode == "theorem4" else "ones")
    symmetric = get("symmetric", mode == "theorem2")
    if mode == "theorem1" and symmetric:
        fail("theorem1 is the non-symmetric case", "symmetric")
    if mode == "theorem2" and not symmetric:
        fail("theorem2 is the symmetric case", "symmetric")
    if mode in ("theorem1", "theorem2") and initial_kind != "ones":
        fail(f"{mode} uses initial = ones", "initial")
    if mode == "theorem4" and initial_kind != "iid":
        fail("theorem4 uses initial = iid", "initial")
    if initial_kind == "ones":
        for key in ("xi_family", "xi_a0", "xi_w0sq"):
            if key in values:
                fail("only meaningful with initial = iid", key)

    try:
        entry = EntryLaw(get("entry_family", "gaussian"), get("w", 1.0))
    except ValidationError as exc:
        fail(str(exc), "w")
    try:
        init = InitialLaw(initial_kind, get("xi_family", "gaussian"), get("xi_a0", 0.0), get("xi_w0sq", 1.0))
    except ValidationError as exc:
        fail(str(exc), "xi_w0sq")

    seed = get("seed", 0) if seed_override is None else seed_override
    th = Thresholds(
        ks_max=get("ks_max", 0.02),
        variance_decay_min_factor=get("variance_decay_min_factor", 2.0),
        moment_se=get("moment_se", 3.0),
        identity_se=get("identity_se", 4.0),
        covariance_se=get("covariance_se", 4.0),
        norm_eps_factor=get("norm_eps_factor", 0.25),
    )
    times = get("times", (1.0,))
    pairs = get("covariance_pairs", ())
    for t, s in pairs:
        if t not in times or s not in times:
            fail(f"pair {t:g}:{s:g} is not on the time grid", "covariance_pairs")
    if pairs and (mode != "theorem1" or get("kappa", 0.0) != 0.0):
        fail("the covariance limit is only defined for theorem1 with kappa = 0", "covariance_pairs")

    kwargs = dict(
        ensemble=EnsembleSpec(n, symmetric, entry, init, 0),
        kappa=get("kappa", 0.0),
        times=times,
        lambdas=get("lambdas"),
        replicas=get("replicas", 100),
        n_sweep=get("n_sweep"),
        master_seed=seed,
        thresholds=th,
        tol=get("tol", DEFAULT_TOL),
        covariance_pairs=pairs,
        norm_check=get("norm_check", False),
    )
    # Field-level checks first so that errors point at the right key.
    for key, check in (("times", _check_times), ("tol", _check_tol), ("n_sweep", _check_sweep)):
        if key in values:
            msg = check(values[key][0])
            if msg:
                fail(msg, key)
    if kwargs["n_sweep"] is not None and kwargs["replicas"] < 2:
        fail("a dimension sweep needs at least 2 replicas", "replicas")
    try:
        plan = ExperimentPlan(**kwargs)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    return Config(mode, plan, {k: v[1] for k, v in values.items()})


def _check_times(times) -> str | None:
    if any(t < 0 for t in times):
        return "times must be non-negative"
    if any(b <= a for a, b in zip(times, times[1:])):
        return "times must be strictly increasing"
    return None


def _check_tol(tol) -> str | None:
    if not 0 < tol <= 1e-4:
        return "must lie in (0, 1e-4]"
    return None


def _check_sweep(sweep) -> str | None:
    if len(sweep) < 2:
        return "needs at least two dimensions"
    if any(n < 2 for n in sweep):
        return "dimensions must be >= 2"
    if any(b <= a for a, b in zip(sweep, sweep[1:])):
        return "must be strictly increasing"
    return None


def load(path: str | Path, seed_override: int | None = None) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build(parse_text(text), seed_override)
