import os
import subprocess

import pytest

CLI = os.environ.get("IONHOM_CLI", "ionhom")

CW = """mode=cw
n_ions=1
span_s=0.005
optics.path_efficiency=1
"""


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cw.cfg"
    p.write_text(CW)
    return p


def test_simulate_is_byte_deterministic(tmp_path, config):
    a, b, c = tmp_path / "a.itg", tmp_path / "b.itg", tmp_path / "c.itg"
    assert run("simulate", "--config", config, "--seed", 11, "--out", a).returncode == 0
    assert run("simulate", "--config", config, "--seed", 11, "--out", b).returncode == 0
    assert run("simulate", "--config", config, "--seed", 12, "--out", c).returncode == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    assert a.read_bytes()[:4] == b"ITG1"


def test_missing_seed_is_a_validation_error(tmp_path, config):
    r = run("simulate", "--config", config, "--out", tmp_path / "x.itg")
    assert r.returncode == 1
    assert "seed" in r.stderr


def test_correlate_and_fit(tmp_path, config):
    tags = tmp_path / "run.itg"
    assert run("simulate", "--config", config, "--seed", 3, "--out", tags).returncode == 0
    hist = tmp_path / "hist.csv"
    r = run("correlate", tags, "--bin", 1000, "--window", 100000, "--oracle", "--out", hist)
    assert r.returncode == 0, r.stderr
    lines = hist.read_text().splitlines()
    assert lines[0] == "# ionhom correlation histogram"
    assert "delay_ps,counts,normalized,stat_err" in lines
    assert len([l for l in lines if l and l[0] in "-0123456789"]) == 200

    report = tmp_path / "fit.txt"
    r = run("fit", hist, "--model", "rabi", "--out", report)
    assert r.returncode in (0, 3), r.stderr
    assert "model: rabi" in report.read_text()
    assert (tmp_path / "fit_model.csv").exists()


def test_exit_codes(tmp_path):
    assert run("simulate", "--bogus").returncode == 1
    assert run("correlate", tmp_path / "missing.itg", "--out", tmp_path / "h.csv").returncode == 2
    bad = tmp_path / "bad.itg"
    bad.write_bytes(b"NOPE" + bytes(20))
    r = run("correlate", bad, "--out", tmp_path / "h.csv")
    assert r.returncode == 2
    assert "offset 0" in r.stderr
    assert run("correlate", bad, "--bin", 3, "--window", 10, "--out", tmp_path / "h.csv").returncode == 1
    assert run("figure", "fig9", "--seed", 1, "--out", tmp_path / "f").returncode == 1
    assert run("fit", tmp_path / "missing.csv", "--out", tmp_path / "r.txt").returncode == 2


def test_empty_file_gives_zero_histogram(tmp_path):
    empty = tmp_path / "empty.itg"
    empty.write_bytes(b"ITG1" + (1).to_bytes(4, "little") + (1).to_bytes(4, "little") + bytes([2, 0, 0, 0]) + bytes(8))
    out = tmp_path / "h.csv"
    assert run("correlate", empty, "--out", out).returncode == 0
    text = out.read_text()
    assert "# normalization=undefined" in text
    rows = [l for l in text.splitlines() if l and not l.startswith("#") and not l.startswith("delay")]
    assert all(r.split(",")[1] == "0" for r in rows)
