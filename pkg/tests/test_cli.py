import json
import subprocess
import sys
from pathlib import Path

import pytest

from contactline.cli import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EXAMPLE = str(CONFIGS / "example.ini")


def _manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


def test_validate_ok(tmp_path, capsys):
    assert run(["validate", "--config", EXAMPLE, "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("0 violations")
    m = _manifest(tmp_path)
    assert m["exit_status"] == 0 and m["error"] is None
    assert "report.txt" in m["outputs"]


def test_young_violation_exit_1(tmp_path, capsys):
    code = run(["validate", "--config", str(CONFIGS / "young_violation.ini"), "--out", str(tmp_path)])
    assert code == 1
    assert "Young relation" in capsys.readouterr().out
    assert _manifest(tmp_path)["error"]["type"] == "ValidationError"


@pytest.mark.parametrize(
    "argv",
    [[], ["frobnicate", "--config", EXAMPLE], ["validate"], ["validate", "--config", EXAMPLE, "--seed", "-1"],
     ["validate", "--config", EXAMPLE, "--threads", "0"]],
)
def test_usage_errors(argv):
    assert run(argv) == 64


def test_missing_config_file(tmp_path):
    assert run(["validate", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 1


def test_large_amplitude_exit_2(tmp_path):
    code = run(["nonlinear", "--config", str(CONFIGS / "large_amplitude.ini"), "--out", str(tmp_path)])
    assert code == 2
    m = _manifest(tmp_path)
    assert m["exit_status"] == 2
    assert m["error"]["type"] in {"DegenerateMap", "NotContracting", "MaxIterExceeded"}


def test_equilibrium_and_basis(tmp_path, capsys):
    assert run(["equilibrium", "--config", EXAMPLE, "--out", str(tmp_path / "eq")]) == 0
    assert "warning" not in capsys.readouterr().out
    assert run(["basis", "--config", EXAMPLE, "--out", str(tmp_path / "b")]) == 0
    m = _manifest(tmp_path / "b")
    assert m["basis_checksum"] and m["mesh_checksum"]
    rows = (tmp_path / "b" / "eigenvalues.csv").read_text().splitlines()
    assert len(rows) == 25


@pytest.fixture(scope="module")
def nonlinear_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("nl")
    outs = [base / "a", base / "b"]
    codes = [run(["nonlinear", "--config", EXAMPLE, "--out", str(o)]) for o in outs]
    return codes, outs


def test_nonlinear_deterministic(nonlinear_runs):
    codes, (a, b) = nonlinear_runs
    assert codes == [0, 0]
    for name in ("iterations.csv", "timeseries.csv", "ledger.csv", "summary.csv", "trajectory.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    m = _manifest(a)
    assert m["results"]["T"] == pytest.approx(0.01)
    assert m["results"]["T_eps"] == pytest.approx(0.05)
    assert m["results"]["lambda_hat"] == pytest.approx(0.00319607, rel=1e-5)


def test_ledger_replay_and_resume(nonlinear_runs, tmp_path, capsys):
    _, (a, _) = nonlinear_runs
    out = tmp_path / "replay"
    assert run(["ledger", "--config", EXAMPLE, "--run", str(a), "--out", str(out)]) == 0
    assert _manifest(out)["results"]["matches_inline"] is True
    capsys.readouterr()
    assert run(["nonlinear", "--config", EXAMPLE, "--out", str(a)]) == 0
    assert "up to date" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    p = subprocess.run(
        [sys.executable, "-m", "contactline", "validate", "--config", EXAMPLE, "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert p.returncode == 0, p.stderr
    assert "0 violations" in p.stdout
