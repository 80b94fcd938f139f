"""Acceptance criteria 1-9, one pass/fail line per criterion (run with -s to see them live)."""

import json
import subprocess
import sys
import time

import pytest

from hjdiv import geometry
from hjdiv.acceptance import CRITERIA, Context, run_one
from hjdiv.cli import main
from hjdiv.geometry import MetricField, StatisticalModel

_ctx = Context()
_lines = []


def _report(line):
    _lines.append(line)
    print(line)


@pytest.fixture(scope="module", autouse=True)
def summary():
    yield
    print("\n" + "\n".join(_lines))


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: f"{c.number}-{c.name}")
def test_criterion(criterion):
    # criteria share a context so criterion 7 checks the trajectories produced by 1-5
    result = run_one(criterion, _ctx)
    _report(result.line())
    assert result.passed, result.line()


def test_criterion_9_verify_command():
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "hjdiv.cli", "verify", "--format", "json"], capture_output=True, text=True)
    seconds = time.perf_counter() - start
    doc = json.loads(proc.stdout)
    passed = proc.returncode == 0 and doc["passed"] and len(doc["criteria"]) == 8 and seconds <= 60
    status = "PASS" if passed else "FAIL"
    _report(f"[{status}] 9. verify-command: exit {proc.returncode}, {len(doc['criteria'])} criteria in {seconds:.1f}s (budget 60s)")
    assert passed, proc.stderr


def _sign_flipped_exponential():
    good = geometry._exponential()
    return StatisticalModel(
        name=good.name,
        dim=1,
        lo=good.lo,
        hi=good.hi,
        metric=MetricField(1, exprs=[["-1/x1^2"]]),
        skewness=good.skewness,
        divergences=good.divergences,
    )


def test_verify_detects_metric_sign_bug(monkeypatch, capsys):
    monkeypatch.setitem(geometry.BUILTIN_MODELS, "exponential", _sign_flipped_exponential)
    code = main(["verify", "--filter", "recovery"])
    out = capsys.readouterr().out
    assert code == 2
    assert "[FAIL] 2. metric-recovery" in out
