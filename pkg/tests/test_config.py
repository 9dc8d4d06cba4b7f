import pytest

from randyn.config import ConfigError, build, load, parse_text

BASE = """\
# theorem 1 at small size
mode = theorem1
n = 100
times = 0.5, 1   # two frames
replicas = 5
seed = 9
"""


def test_parse_and_build(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(BASE)
    cfg = load(p)
    assert cfg.mode == "theorem1"
    assert cfg.plan.times == (0.5, 1.0)
    assert cfg.plan.master_seed == 9
    assert cfg.plan.ensemble.n == 100 and not cfg.plan.ensemble.symmetric
    assert load(p, seed_override=4).plan.master_seed == 4


@pytest.mark.parametrize(
    "extra,key,line",
    [
        ("replicas = 0", "replicas", 7),
        ("bogus = 1", "bogus", 7),
        ("w = -1", "w", 7),
        ("kappa = abc", "kappa", 7),
        ("n_sweep = 500, 250", "n_sweep", 7),
        ("norm_check = maybe", "norm_check", 7),
        ("seed = 3", "seed", 7),  # repeated
        ("covariance_pairs = 1:3", "covariance_pairs", 7),
        ("symmetric = true", "symmetric", 7),
    ],
)
def test_errors_name_key_and_line(extra, key, line):
    with pytest.raises(ConfigError) as info:
        build(parse_text(BASE + extra + "\n"))
    assert info.value.key == key
    assert info.value.line == line
    assert f"'{key}'" in str(info.value) and f"line {line}" in str(info.value)


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 2"):
        parse_text("mode = theorem1\njust words\n")


def test_required_keys():
    with pytest.raises(ConfigError, match="'mode'"):
        build(parse_text("n = 10\n"))
    with pytest.raises(ConfigError, match="'n'"):
        build(parse_text("mode = theorem2\n"))


def test_theorem_defaults():
    c2 = build(parse_text("mode = theorem2\nn = 10\n"))
    assert c2.plan.ensemble.symmetric
    c4 = build(parse_text("mode = theorem4\nn = 10\nxi_family = rademacher\nxi_a0 = 0.5\nxi_w0sq = 2\n"))
    law = c4.plan.ensemble.initial_law
    assert law.kind == "iid" and law.family.value == "rademacher" and law.a0 == 0.5
    with pytest.raises(ConfigError, match="xi_w0sq"):
        build(parse_text("mode = theorem4\nn = 10\nxi_a0 = 2\nxi_w0sq = 1\n"))
    with pytest.raises(ConfigError, match="xi_family"):
        build(parse_text("mode = theorem1\nn = 10\nxi_family = gaussian\n"))


def test_lambdas_and_pairs():
    c = build(parse_text(BASE + "lambdas = 0.5, 1.5\ncovariance_pairs = 0.5:1, 1:1\n"))
    assert c.plan.lambdas == (0.5, 1.5)
    assert c.plan.covariance_pairs == ((0.5, 1.0), (1.0, 1.0))
    assert build(parse_text(BASE + "lambdas = auto\n")).plan.lambdas is None


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.cfg")


def test_shipped_configs_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parent.parent / "configs"
    paths = sorted(root.glob("*.cfg"))
    assert paths
    for p in paths:
        load(p)
