import math
import subprocess
import sys

import pytest

from randyn import laws
from randyn.cli import csv_text, fmt, main

from conftest import I0_2_MINUS_1, I1_2


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_predict_t0(capsys):
    code, out, _ = run(capsys, "predict", "--mode", "iid", "--kappa", "0", "--w", "1", "--t", "0")
    assert code == 0
    assert out == "t,a,sigma\n0,1,0\n"


def test_predict_oracles(capsys):
    _, out, _ = run(capsys, "predict", "--mode", "iid", "--kappa", "0", "--w", "1", "--t", "1")
    t, a, sigma = out.splitlines()[1].split(",")
    assert float(sigma) == pytest.approx(I0_2_MINUS_1, rel=1e-15)
    _, out, _ = run(capsys, "predict", "--mode", "sym", "--kappa", "0", "--w", "1", "--t", "1")
    assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(I1_2, rel=1e-12)


def test_predict_mixture_columns_and_list(capsys):
    code, out, _ = run(capsys, "predict", "--mode", "iid", "--kappa", "0.5", "--w", "1",
                       "--t", "0.5,1", "2", "--xi-family", "rademacher", "--xi-a0", "0", "--xi-w0sq", "2")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "t,a,sigma,xi_scale,z_scale"
    assert [l.split(",")[0] for l in lines[1:]] == ["0.5", "1", "2"]
    t, a, sigma, c, b = map(float, lines[3].split(","))
    assert c == a and b == pytest.approx(math.sqrt(2 * sigma))


def test_predict_argument_errors(capsys):
    assert run(capsys, "predict", "--mode", "iid", "--kappa", "0", "--w", "0", "--t", "1")[0] == 2
    assert run(capsys, "predict", "--mode", "iid", "--kappa", "0", "--w", "1", "--t", "-1")[0] == 2
    with pytest.raises(SystemExit) as e:
        main(["predict", "--mode", "bogus", "--kappa", "0", "--w", "1", "--t", "1"])
    assert e.value.code == 2


@pytest.mark.parametrize("kappa,verdict,code", [
    ("2", "stable", 0), ("1", "critically_stable", 0), ("0.5", "unstable", 1)])
def test_classify(capsys, kappa, verdict, code):
    c, out, _ = run(capsys, "classify", "--kappa", kappa, "--w", "1", "--seed", "3")
    assert c == code
    assert out.split()[0] == verdict and "kappa_c=1" in out and "sigma(t)" in out


def test_classify_bad_w(capsys):
    code, _, err = run(capsys, "classify", "--kappa", "1", "--w", "0")
    assert code == 2 and "w must be positive" in err


def test_fmt_and_csv():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(1.0) == "1" and fmt(True) == "true" and fmt(math.nan) == "nan"
    assert csv_text(["a", "b"], [[1, 2.5]]) == "a,b\n1,2.5\n"


def _cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_verify_replicas_zero(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mode = theorem1\nn = 50\nreplicas = 0\n")
    code, _, err = run(capsys, "verify", cfg, str(tmp_path / "out"))
    assert code == 2 and "replicas" in err


def test_verify_refuses_beyond_cap(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mode = theorem1\nn = 2000\nkappa = 0.2\ntimes = 1000\n")
    code, _, err = run(capsys, "verify", cfg, str(tmp_path / "out"))
    assert code == 2 and "overflow cap" in err


def test_verify_writes_all_files(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mode = theorem2\nn = 80\ntimes = 0.5, 1\nreplicas = 4\nseed = 2\n")
    out = tmp_path / "out"
    code, _, _ = run(capsys, "verify", cfg, str(out))
    assert code in (0, 1)
    for name in ("report.csv", "checks.csv", "selfavg.csv", "norms.csv", "summary.txt"):
        assert (out / name).exists()
    report = (out / "report.csv").read_bytes()
    assert b"\r" not in report
    assert report.splitlines()[0].startswith(b"t,law,pred_mean")
    assert len(report.splitlines()) == 3
    checks = (out / "checks.csv").read_text().splitlines()
    assert checks[1].startswith("identity,0.5,1,")
    assert (out / "selfavg.csv").read_text() == "n,lambda,t,replicas,replica_variance,limit_cdf,eligible\n"
    assert not list(out.glob("*.tmp"))


def test_verify_runtime_failure_marks_incomplete(tmp_path, capsys, monkeypatch):
    from randyn import cli

    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setitem(cli.RUNNERS, "theorem1", boom)
    cfg = _cfg(tmp_path, "mode = theorem1\nn = 20\n")
    code, _, _ = run(capsys, "verify", cfg, str(tmp_path / "out"))
    assert code == 3
    assert (tmp_path / "out" / "summary.txt").read_text().startswith("INCOMPLETE")


def test_spectrum_tiny_deterministic(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mode = theorem1\nn = 2\nreplicas = 1\nseed = 5\n")
    outs = []
    for k in range(2):
        d = tmp_path / f"s{k}"
        assert run(capsys, "spectrum", cfg, "-o", str(d))[0] == 0
        outs.append((d / "norms.csv").read_bytes())
        assert not (d / "hist.csv").exists()
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 2


def test_spectrum_symmetric_histogram(tmp_path, capsys):
    cfg = _cfg(tmp_path, "mode = theorem2\nn = 200\nreplicas = 2\n")
    code, out, _ = run(capsys, "spectrum", cfg, "-o", str(tmp_path), "--seed", "1")
    assert code == 0
    rows = (tmp_path / "hist.csv").read_text().splitlines()
    assert rows[0] == "bin_left,bin_right,count" and len(rows) == 65
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 400
    assert float(rows[1].split(",")[0]) == -2.25


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "randyn", "classify", "--kappa", "2", "--w", "1"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("stable")
