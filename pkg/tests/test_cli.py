import json
import re
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from betacut.cli import dumps, parse_poly, run_command
from betacut.config import ConfigError, parse_config

GAUSS_CFG = {
    "potential": {"orders": [[0, 0, 0.5]]},
    "edges": {"margin": 1.0},
    "beta": 2.0,
    "recursion": {"max_k": 1, "probes": [[3.0], [3.0, -3.0]]},
    "mc": {"N": 50, "sweeps": 6000, "burn_in": 1000, "seed": 1},
}


def _write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(tmp_path, argv, capsys):
    code = run_command(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_equilibrium_command(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    out = tmp_path / "out"
    code, res = _run(tmp_path, ["equilibrium", cfg, "--out-dir", str(out)], capsys)
    assert code == 0
    assert res["alpha_minus"] == pytest.approx(-2, abs=1e-8) and res["alpha_plus"] == pytest.approx(2, abs=1e-8)
    saved = json.loads((out / "equilibrium.json").read_text())
    assert saved["energy"] == pytest.approx(0.75, abs=1e-10)
    csv = (out / "equilibrium_density.csv").read_text().splitlines()
    assert csv[0].startswith("#") and "rho" in csv[0]
    assert csv[1] == "x,rho"


def test_json_only_format(tmp_path, capsys):
    cfg = _write(tmp_path, {**GAUSS_CFG, "output": {"dir": str(tmp_path / "o"), "format": "json"}})
    assert run_command(["equilibrium", cfg]) == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["equilibrium.json"]


def test_idempotent(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    for d in ("a", "b"):
        assert run_command(["expand", cfg, "--out-dir", str(tmp_path / d)]) == 0
        assert run_command(["sample", cfg, "--out-dir", str(tmp_path / d), "--N", "8", "--sweeps", "1400"]) == 0
    for name in ("expand.json", "sample.json", "chain.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_expand_probe_values(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    code, res = _run(tmp_path, ["expand", cfg, "--out-dir", str(tmp_path / "e")], capsys)
    assert code == 0
    two = res["probes"][1]["values"]["2,0"]
    assert two["re"] == pytest.approx(1 / 45, abs=1e-12)
    assert max(res["residuals"].values()) < 1e-8


def test_clt_command(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    code, res = _run(tmp_path, ["clt", cfg, "--h", "x^2", "--out-dir", str(tmp_path / "c")], capsys)
    assert code == 0 and res["covariance"] == pytest.approx(2.0, abs=1e-10) and res["mean"] == 0.0


def test_free_energy_command(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    code, res = _run(tmp_path, ["free-energy", cfg, "--max-k", "1", "--out-dir", str(tmp_path / "f")], capsys)
    assert code == 0 and all(abs(v) < 1e-12 for v in res["F"].values())


def test_sample_csv(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    code, res = _run(tmp_path, ["sample", cfg, "--N", "6", "--sweeps", "1500", "--out", "c.csv", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1].split(",")[:3] == ["chain", "sweep", "lambda_0"]
    assert len(lines) - 2 == 500
    assert int(lines[2].split(",")[1]) == 1001


def test_verify_scorecard(tmp_path, capsys):
    cfg = _write(tmp_path, GAUSS_CFG)
    code, res = _run(tmp_path, ["verify", cfg, "--out-dir", str(tmp_path / "v")], capsys)
    assert code == 0
    names = {c["name"] for c in res["checks"]}
    assert {"operator_roundtrip", "leading_loop_equation", "loop_residuals", "sparsity", "clt_variance_x"} <= names
    assert res["passed"] == res["total"]


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        json.dumps({**GAUSS_CFG, "extra": 1}),
        json.dumps({**GAUSS_CFG, "beta": -1}),
        json.dumps({**GAUSS_CFG, "edges": {"a_minus": 3, "a_plus": -3}}),
        json.dumps({**GAUSS_CFG, "mc": {"sweeps": 10, "burn_in": 20}}),
        json.dumps({**GAUSS_CFG, "output": {"format": "xml"}}),
        json.dumps({k: v for k, v in GAUSS_CFG.items() if k != "beta"}),
    ],
)
def test_config_errors(tmp_path, capsys, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    out = tmp_path / "out"
    code, res = _run(tmp_path, ["equilibrium", str(p), "--out-dir", str(out)], capsys)
    assert code == 2 and res["error"] == "config"
    assert not out.exists()


def test_numerical_error(tmp_path, capsys):
    cfg = _write(tmp_path, {**GAUSS_CFG, "potential": {"orders": [[0, 0, -1, 0, 0.25]]}, "edges": {"a_minus": -4, "a_plus": 4}})
    out = tmp_path / "out"
    code, res = _run(tmp_path, ["expand", cfg, "--out-dir", str(out)], capsys)
    assert code == 3 and res["error"] == "numerical"
    assert not out.exists()


def test_missing_file_and_bad_command(tmp_path, capsys):
    assert run_command(["equilibrium", str(tmp_path / "nope.json")]) == 2
    assert run_command(["frobnicate", "x"]) == 2


def test_seventeen_digits():
    s = dumps({"a": 0.1, "b": [1 / 3]})
    assert "0.10000000000000001" in s and "0.33333333333333331" in s
    v = json.loads(s)
    assert v["a"] == 0.1 and v["b"][0] == 1 / 3


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    assert json.loads(dumps({"x": x}))["x"] == x


def test_parse_poly():
    assert np.allclose(parse_poly("1,0,2"), [1, 0, 2])
    assert np.allclose(parse_poly("x^2 - 3*x + 1"), [1, -3, 1])
    assert np.allclose(parse_poly("x"), [0, 1])
    with pytest.raises(ConfigError):
        parse_poly("sin(x)")


def test_parse_config_defaults():
    rc = parse_config(GAUSS_CFG)
    assert rc.output_format == "csv" and rc.max_k == 1
    assert rc.mc_config().N == 50
    with pytest.raises(ConfigError):
        parse_config({**GAUSS_CFG, "edges": {"margin": 1.0, "nature_minus": "hard"}})


def test_console_script(tmp_path):
    cfg = _write(tmp_path, GAUSS_CFG)
    r = subprocess.run([sys.executable, "-m", "betacut.cli", "equilibrium", cfg, "--out-dir", str(tmp_path / "s")],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert re.search(r'"alpha_plus": 2(\.0*)?\d*', r.stdout)
