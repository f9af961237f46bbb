import csv
import math

import mpmath
import numpy as np
import pytest

from sipmlab.cli import RunConfig, main, parse_sweep


def ini(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_sweep():
    assert parse_sweep("1-4, 8") == [1, 2, 3, 4, 8]
    assert parse_sweep("") == []


def test_spectrum_sweep(tmp_path):
    cfg = ini(tmp_path, "[multiplier]\nbeta = 1\nk = 1-32\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    r = rows(tmp_path / "o" / "spectrum.csv")
    assert len(r) == 32
    assert all(x["decay_certified"] == "true" for x in r)
    assert list(r[0]) == ["k", "lambda", "bracket_lo", "bracket_hi", "residual", "n0", "decay_certified"]


def test_spectrum_beta2_clean_error(tmp_path, capsys):
    cfg = ini(tmp_path, "[multiplier]\nbeta = 2\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "sequence not unbounded" in capsys.readouterr().err


def test_spectrum_empty_sweep(tmp_path):
    cfg = ini(tmp_path, "[multiplier]\nk =\n")
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert (tmp_path / "o" / "spectrum.csv").read_text().count("\n") == 1


def test_scan_figure_settings(tmp_path):
    cfg = ini(tmp_path, "[multiplier]\nbeta = 1.5\na = 1\nk = 1\n")
    assert main(["scan-f2", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    cross = rows(tmp_path / "o" / "crossing.csv")[0]
    assert float(cross["rel_diff"]) <= 1e-6
    assert int(cross["asymptotes"]) >= 1


def test_scan_table_direct_case(tmp_path):
    n = np.arange(1, 3001)
    table = tmp_path / "p.csv"
    np.savetxt(table, np.column_stack([n, 0.5 * n ** 4.0]), delimiter=",", fmt="%.17g")
    cfg = ini(tmp_path, f"[multiplier]\nkind = table\ntable = {table}\n")
    assert main(["scan-f2", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert int(rows(tmp_path / "o" / "crossing.csv")[0]["asymptotes"]) == 0


def test_scan_single_point(tmp_path):
    cfg = ini(tmp_path, "[contfrac]\nn_lambda = 1\n")
    # a one-point grid cannot bracket a crossing: the scan is still written
    assert main(["scan-f2", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert len(rows(tmp_path / "o" / "scan.csv")) == 1


@pytest.mark.parametrize("init", ["eigen", "random", "zero"])
def test_evolve_linear(tmp_path, init):
    cfg = ini(tmp_path, f"[multiplier]\nk = 2\n[spectral]\ninit = {init}\n")
    assert main(["evolve-linear", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    r = rows(tmp_path / "o" / "trajectory.csv")
    if init == "zero":
        assert all(float(x["shell_norm"]) == 0.0 for x in r)


def test_beta2(tmp_path):
    cfg = ini(tmp_path, "[multiplier]\nk = 1, 2, 4, 8\n")
    assert main(["beta2-check", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert len(rows(tmp_path / "o" / "beta2.csv")) == 4


def test_cbeta_matches_mpmath(tmp_path, capsys):
    assert main(["cbeta", "--out", str(tmp_path / "o")]) == 0
    val = float(capsys.readouterr().out.strip())
    b = mpmath.mpf("0.5")
    ref = mpmath.pi * 2 ** (2 - b) * mpmath.gamma((2 - b) / 2) / (b * mpmath.gamma(b / 2))
    assert val == pytest.approx(float(ref), rel=1e-12)


def test_validate_symbol(tmp_path):
    assert main(["validate-symbol", "--out", str(tmp_path / "o"), "--quiet"]) == 0
    cfg = ini(tmp_path, "[multiplier]\nbeta = 2\nkmax = 8\nnmax = 8\n")
    assert main(["validate-symbol", "--config", cfg, "--out", str(tmp_path / "p"), "--quiet"]) == 1


def test_patch_run_zero(tmp_path):
    cfg = ini(tmp_path, "[patch]\ninit = zero\nN = 128\nT = 0.05\nsnapshot_every = 2\n")
    assert main(["patch-run", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    r = rows(tmp_path / "o" / "series.csv")
    assert r and all(float(x["h4"]) == 0.0 for x in r)
    snaps = sorted((tmp_path / "o" / "snapshots").glob("*.csv"))
    assert snaps and all(np.all(np.loadtxt(p, delimiter=",", skiprows=1)[:, 1] == 0) for p in snaps)


def test_patch_verify_default(tmp_path):
    assert main(["patch-verify", "--out", str(tmp_path / "o"), "--quiet"]) == 0
    r = rows(tmp_path / "o" / "verify.csv")
    assert r and all(x["passed"] == "true" for x in r)


def test_exit_codes(tmp_path):
    assert main(["nosuch"]) == 2
    assert main(["cbeta", "--config", ini(tmp_path, "[bogus]\nx = 1\n")]) == 2
    assert main(["cbeta", "--config", ini(tmp_path, "[patch]\nbeta = x\n", "b.ini"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["cbeta", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["cbeta", "--config", ini(tmp_path, "[patch]\nbeta = 1.5\n", "d.ini"),
                 "--out", str(tmp_path / "o")]) == 1


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SIPMLAB_OUT", str(tmp_path / "env"))
    assert main(["cbeta", "--quiet"]) == 0
    assert (tmp_path / "env" / "cbeta.csv").exists()
    assert main(["cbeta", "--quiet", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "cbeta.csv").exists()


def test_determinism_and_config_echo(tmp_path):
    cfg = ini(tmp_path, "[multiplier]\nk = 1-4\n[run]\nseed = 5\n")
    for d in ("a", "b"):
        assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.csv").read_bytes()
    echo = tmp_path / "a" / "config.ini"
    assert RunConfig.load("spectrum", str(echo)).sections == RunConfig.load("spectrum", cfg).sections
    assert main(["spectrum", "--config", str(echo), "--out", str(tmp_path / "c"), "--quiet"]) == 0
    assert (tmp_path / "c" / "spectrum.csv").read_bytes() == a
    # 17 significant digits round-trip every float
    lam = rows(tmp_path / "a" / "spectrum.csv")[0]["lambda"]
    assert repr(float(lam)) == repr(float(f"{float(lam):.17g}"))
    assert math.isfinite(float(lam))
