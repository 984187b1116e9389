import json
import math
import subprocess
import sys

import pytest

from chiral_cp.cli import EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main, parse_range, read_config


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return [l for l in text.splitlines() if l and not l.startswith("#")]


def pops(line):
    return {k: float(v) for k, v in (f.split("=") for f in line.split()[1:])}


def test_enumerate_csv(capsys):
    code, out, _ = run(capsys, "enumerate", "--format", "csv")
    assert code == EXIT_OK
    assert len(body(out)) == 13


def test_enumerate_quiet_to_file_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, out, _ = run(capsys, "enumerate", "--format", "csv", "--quiet", "--out", str(a))
    assert code == EXIT_OK and out == ""
    run(capsys, "enumerate", "--format", "csv", "--quiet", "--out", str(b))
    assert len(body(a.read_text())) == 13
    assert a.read_bytes() == b.read_bytes()


def test_simulate_single_ideal(capsys):
    code, out, _ = run(capsys, "simulate", "--assembly", "single", "--hand", "both")
    assert code == EXIT_OK
    lines = {l.split()[0]: pops(l) for l in body(out)}
    assert lines["L"]["P1"] == pytest.approx(1, abs=1e-10)
    assert lines["R"]["P3"] == pytest.approx(1, abs=1e-10)


def test_simulate_area_error_matches_closed_form(capsys):
    _, out, _ = run(capsys, "simulate", "--hand", "R", "--eps", "0.1")
    x = math.pi * 1.1
    expected = (math.cos(x / 4) * math.sin(x / 4) * (1 + math.sin(x / 2))) ** 2
    assert pops(body(out)[0])["P3"] == pytest.approx(expected, abs=1e-10)


def test_simulate_show_propagator(capsys):
    code, out, _ = run(capsys, "simulate", "--assembly", "CP5", "--show-propagator")
    assert code == EXIT_OK and "j" in out


def test_unknown_assembly(capsys):
    code, _, err = run(capsys, "simulate", "--assembly", "nope")
    assert code == EXIT_USAGE and "CP9" in err


def test_usage_errors(capsys):
    assert run(capsys, "simulate", "--bogus")[0] == EXIT_USAGE
    assert run(capsys, "scan", "--eps", "1:0:x")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE


def test_scan_point_agrees_with_simulate(capsys):
    _, out, _ = run(capsys, "scan", "--assembly", "T7", "--eps", "0.05:0.05:1", "--delta", "0.2")
    rows = body(out)
    assert rows[0].startswith("epsilon,delta")
    p3l = float(rows[1].split(",")[4])
    _, sim, _ = run(capsys, "simulate", "--assembly", "T7", "--eps", "0.05", "--delta", "0.2")
    assert p3l == pytest.approx(pops(body(sim)[0])["P3"], rel=1e-10, abs=1e-12)


def test_scan_matrix(capsys):
    code, out, _ = run(capsys, "scan", "--eps", "-0.1:0.1:3", "--delta", "-1:1:5",
                       "--format", "matrix")
    assert code == EXIT_OK
    assert len(body(out)) == 6


def test_config_file_supplies_defaults(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# area error\nassembly = T5\neps = 0.1\n")
    _, out, _ = run(capsys, "simulate", "--config", str(cfg))
    _, ref, _ = run(capsys, "simulate", "--assembly", "T5", "--eps", "0.1")
    assert body(out) == body(ref)
    assert "# assembly=T5" in out
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "simulate", "--config", str(bad))[0] == EXIT_USAGE


def test_catalog(capsys):
    code, out, _ = run(capsys, "catalog")
    rows = body(out)
    assert code == EXIT_OK
    assert sum(r.startswith("sequence,") for r in rows) >= 13
    assert any(r.startswith("assembly,CP9") for r in rows)
    _, js, _ = run(capsys, "catalog", "--format", "json")
    assert "D1_full" in json.dumps(json.loads(js))


def test_verify_subset(capsys):
    code, out, _ = run(capsys, "verify", "--claims", "table1,eq5,single-oracle")
    assert code == EXIT_OK
    assert out.count("PASS") == 3
    assert run(capsys, "verify", "--claims", "nonsense")[0] == EXIT_USAGE


def test_optimize_writes_json(capsys, tmp_path):
    path = tmp_path / "sol.json"
    code, _, err = run(capsys, "optimize", "--template", "eq15", "--restarts", "4",
                       "--seed", "0", "--out", str(path))
    assert code == EXIT_OK and "converged=True" in err
    doc = json.loads(path.read_text())
    assert doc["converged"] and len(doc["pulses"]) == 5
    assert doc["config"]["seed"] == 0


def test_optimize_not_converged(capsys, tmp_path):
    tpl = tmp_path / "one.json"
    tpl.write_text(json.dumps({"name": "one", "n_pulses": 1, "target": "half",
                               "symmetry": "palindromic", "areas": [0.5], "free_areas": [True]}))
    code, out, _ = run(capsys, "optimize", "--template", str(tpl), "--restarts", "2")
    assert code == EXIT_NOT_CONVERGED
    assert json.loads(out)["converged"] is False


def test_jobs_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("CHIRAL_CP_JOBS", "2")
    code, out, _ = run(capsys, "optimize", "--restarts", "2", "--seed", "3")
    assert code == EXIT_OK
    assert json.loads(out)["config"]["jobs"] == 2


def test_parse_range_and_config(tmp_path):
    assert parse_range("-1:1:5", "eps") == (-1.0, 1.0, 5)
    assert parse_range("0.3", "delta") == (0.3, 0.3, 1)
    cfg = tmp_path / "c"
    cfg.write_text("a=1\n\n# x\nb = two\n")
    assert read_config(str(cfg)) == {"a": "1", "b": "two"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "chiral_cp", "enumerate", "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and len(body(proc.stdout)) == 13
