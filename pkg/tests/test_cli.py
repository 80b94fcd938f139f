import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hjdiv.cli import main
from hjdiv.geometry import kl_divergence_exponential


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_principal_examples(capsys):
    code, out, _ = run(capsys, "principal", "--model", "exponential", "--lagrangian", "kl", "--from", "1", "--to", "2.718281828459045")
    assert code == 0 and out.splitlines()[0] == "S = 0.718281828459"
    code, out, _ = run(capsys, "principal", "--model", "exponential", "--lagrangian", "alpha:0", "--from", "1", "--to", "2.718281828459045")
    assert code == 0 and out.splitlines()[0] == "S = 0.5"
    code, out, _ = run(capsys, "principal", "--from", "1", "--to", "1")
    assert code == 0 and out.splitlines()[0] == "S = 0"


def test_principal_json(capsys):
    code, out, _ = run(capsys, "principal", "--lagrangian", "kl", "--from", "1", "--to", "2", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert set(doc) == {
        "command", "model", "lagrangian", "from", "to", "S", "iterations",
        "endpoint_residual", "quadrature_error", "initial_velocity",
    }
    assert doc["S"] == pytest.approx(kl_divergence_exponential(1, 2), abs=1e-10)


def test_principal_bloch_input(capsys):
    code, out, err = run(capsys, "principal", "--model", "sphere-qubit", "--from", "1,0,0", "--to", "0,2,0")
    assert code == 0 and "normalized" in err
    assert float(out.split()[2]) == pytest.approx((math.pi / 2) ** 2, abs=1e-9)


def test_principal_no_convergence_exit_4(capsys):
    code, _, err = run(capsys, "principal", "--from", "1", "--to", "50", "--max-iters", "1")
    assert code == 4 and "residual" in err


def test_principal_conjugate_exit_4(capsys):
    code, _, err = run(capsys, "principal", "--model", "sphere-qubit", "--from", "0,-1,0", "--to", "0,1,0")
    assert code == 4 and "SingularShootingJacobian" in err


def test_principal_trajectory_output(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    assert run(capsys, "principal", "--from", "1", "--to", "2", "--output", str(path))[0] == 0
    assert path.read_text().splitlines()[0] == "t,x1,v1,energy"


def test_validate(capsys, tmp_path):
    assert run(capsys, "validate", "--model", "exponential")[0] == 0
    asym = tmp_path / "asym.json"
    asym.write_text(json.dumps({"name": "asym", "dim": 2, "domain": [{"lo": "-inf", "hi": "inf"}] * 2, "metric": [["1", "x1"], ["0", "1"]]}))
    code, out, _ = run(capsys, "validate", "--model", str(asym))
    assert code == 2 and "  symmetry violations: 0" not in out
    code, out, _ = run(capsys, "validate", "--model", str(asym), "--format", "json")
    assert code == 2 and json.loads(out)["symmetry_violations"]
    code, _, err = run(capsys, "validate", "--model", str(tmp_path / "missing.json"))
    assert code == 3 and "error" in err


def test_validate_bad_expression_exit_3(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "b", "dim": 1, "domain": [{"lo": 0, "hi": 1}], "metric": [["1 +"]]}))
    assert run(capsys, "validate", "--model", str(bad))[0] == 3


def test_recover_examples(capsys):
    code, out, _ = run(capsys, "recover", "--divergence", "kl", "--at", "1", "--order", "metric")
    assert code == 0 and "PASS" in out
    code, out, _ = run(capsys, "recover", "--divergence", "kl", "--at", "1", "--order", "skewness", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert doc["recovered"][0][0][0] == pytest.approx(2.0, abs=1e-3)
    code, _, err = run(capsys, "recover", "--at", "0", "--model", "exponential", "--divergence", "kl")
    assert code == 3 and "DomainError" in err


def test_recover_from_principal_function(capsys, tmp_path):
    path = tmp_path / "report.json"
    code, _, _ = run(capsys, "recover", "--lagrangian", "alpha:0", "--at", "1.5", "--output", str(path))
    doc = json.loads(path.read_text())
    assert code == 0 and doc["recovered"][0][0] == pytest.approx(1 / 1.5**2, abs=1e-3)


def test_recover_failure_exit_2(capsys):
    code, out, _ = run(capsys, "recover", "--divergence", "kl", "--at", "1", "--step", "0.2", "--check-tol", "1e-8")
    assert code == 2 and "FAIL" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["recover", "--divergence", "kl", "--at", "1", "--order", "cubic"],
        ["recover", "--divergence", "kl", "--at", "1", "--step", "-1"],
        ["recover", "--divergence", "nope", "--at", "1"],
        ["principal", "--from", "1"],
        ["principal", "--from", "1", "--to", "2", "--lagrangian", "beta:2"],
        ["principal", "--from", "1", "--to", "2", "--dt", "0"],
        ["principal", "--from", "1,2", "--to", "2"],
        ["principal", "--model", "nonsense", "--from", "1", "--to", "2"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_3(argv):
    with pytest.raises(SystemExit) as info:
        sys.exit(main(argv))
    assert info.value.code == 3


def test_grid_examples(capsys, tmp_path):
    path = tmp_path / "g.csv"
    code, _, _ = run(capsys, "grid", "--model", "exponential", "--lagrangian", "alpha:0", "--in", "0.5;1;2", "--output", str(path))
    rows = path.read_text().splitlines()[1:]
    assert code == 0 and len(rows) == 9
    for r in rows:
        a, b, s = (float(v) for v in r.split(",")[:3])
        if a == b:
            assert s == 0.0
    code, out, _ = run(capsys, "grid", "--in", "-0.5;0.5;1", "--output", str(path))
    assert code == 0 and "DomainError" in out and "DomainError" in path.read_text()
    code, _, _ = run(capsys, "grid", "--lagrangian", "kl", "--in", "0.5:2:4", "--fin", "0.75;1.5", "--output", str(path))
    assert code == 0
    for r in path.read_text().splitlines()[1:]:
        a, b, s = (float(v) for v in r.split(",")[:3])
        assert abs(s - kl_divergence_exponential(a, b)) < 1e-6


def test_grid_all_failed_exit_4(capsys, tmp_path):
    assert run(capsys, "grid", "--in", "-1;-2", "--output", str(tmp_path / "g.csv"))[0] == 4


def test_outputs_are_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        run(capsys, "grid", "--model", "sphere-qubit", "--in", "1.2,0.1;1.5,0.3", "--output", str(path))
    assert a.read_bytes() == b.read_bytes()
    for path in (a, b):
        run(capsys, "geodesic", "--from", "1", "--velocity", "0.5", "--output", str(path))
    assert a.read_bytes() == b.read_bytes()
    ja, jb = tmp_path / "a.json", tmp_path / "b.json"
    for path in (ja, jb):
        run(capsys, "recover", "--divergence", "fubini", "--model", "sphere-qubit", "--at", "1,1,0.5", "--output", str(path))
    assert ja.read_bytes() == jb.read_bytes()


def test_geodesic(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, out, _ = run(capsys, "geodesic", "--from", "1", "--velocity", "1", "--output", str(path), "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["end"][0] == pytest.approx(math.e, abs=1e-8)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (1001, 4)
    code, out, _ = run(capsys, "geodesic", "--model", "sphere-qubit", "--from", "1,0,0", "--to", "0,1,0")
    assert code == 0


def test_custom_lagrangian_needs_flag(capsys, tmp_path):
    cfg = tmp_path / "lag.json"
    cfg.write_text(json.dumps({"lagrangian": "exp(v1/x1) - v1/x1 - 1", "momentum": ["(exp(v1/x1) - 1)/x1"]}))
    code, _, err = run(capsys, "principal", "--lagrangian-file", str(cfg), "--from", "1", "--to", "2")
    assert code == 3 and "--unsafe-custom" in err
    code, out, _ = run(capsys, "principal", "--lagrangian-file", str(cfg), "--unsafe-custom", "--from", "1", "--to", "2", "--format", "json")
    assert code == 0 and json.loads(out)["S"] == pytest.approx(kl_divergence_exponential(1, 2), abs=1e-10)


def test_verify_filter(capsys):
    code, out, _ = run(capsys, "verify", "--filter", "quantum", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert [c["number"] for c in doc["criteria"]] == [4, 5, 8]
    code, out, _ = run(capsys, "verify", "--filter", "no-such-tag")
    assert code == 2 and "no criteria match" in out


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "hjdiv.cli", "principal", "--from", "1", "--to", "1"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and proc.stdout.startswith("S = 0")
