import json
import subprocess
import sys
from pathlib import Path

import pytest

import holoreg
from holoreg.cli import main
from holoreg.config import load_config
from holoreg.report import strip_timing, validate_report

EXAMPLES = Path(holoreg.__file__).parent / "examples"


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main([load_config(EXAMPLES / f"{name}.toml").command, "--config", str(EXAMPLES / f"{name}.toml"), "--out", str(out), *extra])
    return code, out


def _report(out):
    (path,) = out.glob("*.json")
    return json.loads(path.read_text())


def test_store_retrieve_report(tmp_path):
    code, out = _run(tmp_path, "store-retrieve", "--format", "structured", "--format", "tabular")
    assert code == 0
    d = _report(out)
    validate_report(d)
    assert d["status"] == "ok"
    assert d["results"]["fidelity"] >= 0.999
    assert (out / "store-retrieve.occupations.csv").exists()


def test_overlap_command(tmp_path):
    code, out = _run(tmp_path, "overlap")
    assert code == 0
    d = _report(out)
    assert d["results"]["M_at_2"] == pytest.approx(-0.5, abs=1e-3)


def test_same_seed_same_bytes(tmp_path):
    a = _report(_run(tmp_path / "a", "bell-pair")[1])
    b = _report(_run(tmp_path / "b", "bell-pair")[1])
    assert json.dumps(strip_timing(a), sort_keys=True) == json.dumps(strip_timing(b), sort_keys=True)


def test_seed_override_recorded(tmp_path):
    code, out = _run(tmp_path, "overlap-vs-N", "--seed", "11")
    assert code == 0
    assert _report(out)["config"]["seed"] == 11


def test_malformed_config_exits_2_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('command = "simulate"\n[device]\nomega_c = 5e9\nL = "1 cm"\n')
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())
    assert "omega_c" in capsys.readouterr().err


def test_bad_jobs(tmp_path):
    assert main(["sweep", "--config", str(EXAMPLES / "rabi-vs-N.toml"), "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_simulation_failure_exits_1(tmp_path):
    # retrieving a qubit that was never written fails inside the compiler
    text = (EXAMPLES / "store-retrieve.toml").read_text().split("[program]")[0]
    text += '[program]\nrecipe = "custom"\nqubits = {q = 1}\nops = [{kind = "retrieve", qubits = ["q"]}]\n'
    cfg = tmp_path / "fail.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1
    d = _report(out)
    assert d["status"] == "failed" and d["error"]


def test_validate_command(tmp_path, capsys):
    code, out = _run(tmp_path, "overlap")
    (rep,) = out.glob("*.json")
    assert main(["validate", "--config", str(EXAMPLES / "overlap.toml"), str(rep)]) == 0
    broken = tmp_path / "broken.json"
    d = json.loads(rep.read_text())
    del d["results"]
    broken.write_text(json.dumps(d))
    assert main(["validate", str(broken)]) != 0
    assert main(["validate"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "holoreg.cli", "validate", "--config", str(EXAMPLES / "bell-pair.toml")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "valid" in proc.stdout
