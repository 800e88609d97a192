import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from instab.cli import main
from instab.model import bundled_config

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "src" / "instab" / "schema"
                     / "report.schema.json").read_text())


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_setting2(capsys):
    code, out, _ = run(capsys, "analyze", bundled_config("table1_setting2"))
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    assert rep["sections"]["lmi"]["u_star"] == pytest.approx(10.8, abs=0.1)
    assert rep["sections"]["eigen"]["status"] == "skipped"


def test_analyze_setting5_both_methods(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", bundled_config("table1_setting5"), "--u-hat", "0.5",
                     "--out", tmp_path, "--format", "both")
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(rep, SCHEMA)
    s = rep["sections"]
    assert s["lmi"]["u_star"] == pytest.approx(1.0, abs=0.1)
    assert s["eigen"]["u_star"] == pytest.approx(0.75, abs=1e-9)
    assert s["lmi"]["verdict"]["status"] == "Instabilizable"
    assert s["envelope"]["phi"] > 0
    assert (tmp_path / "moments.csv").read_text().startswith("t,P_11,P_12,P_22,EV\n")
    assert (tmp_path / "certificate.json").exists()


def test_analyze_scalar_section(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", bundled_config("scalar_benchmark"))
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    assert rep["sections"]["scalar"]["u_star"] == pytest.approx(3.0)
    assert rep["sections"]["lmi"]["u_star"] == pytest.approx(3.0, rel=0.01)


def test_analyze_unbounded(capsys, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"A": [[1.0]], "B": [[0.0]], "C": [], "D": [[1.0]]}))
    code, out, _ = run(capsys, "analyze", path)
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    assert rep["sections"]["lmi"]["u_star"] == "unbounded"


def test_malformed_and_missing(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"A": [[1')
    code, out, err = run(capsys, "analyze", bad)
    assert code == 1 and err.startswith("instab:")
    assert run(capsys, "analyze", tmp_path / "nope.json")[0] == 1
    assert run(capsys, "simulate", tmp_path / "nope.json")[0] == 1


def test_certify_check_paths(capsys, tmp_path):
    s5 = bundled_config("table1_setting5")
    run(capsys, "analyze", s5, "--out", tmp_path)
    cert_path = tmp_path / "certificate.json"
    assert run(capsys, "certify", s5, "--check", cert_path)[0] == 0
    assert run(capsys, "certify", bundled_config("table1_setting6"), "--check", cert_path)[0] == 3

    doc = json.loads(cert_path.read_text())
    R = np.array(doc["R"])
    doc["R"] = (R + np.diag([0.3, -0.3])).tolist()
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    code, _, err = run(capsys, "certify", s5, "--check", broken)
    assert code == 4 and "FAIL" in err


def test_certify_verdict(capsys):
    code, out, _ = run(capsys, "certify", bundled_config("table1_setting1"), "--u-hat", "7")
    assert code == 0 and json.loads(out)["status"] == "Instabilizable"
    code, _, _ = run(capsys, "certify", bundled_config("table1_setting1"))
    assert code == 1


def test_simulate_zero_grows(capsys):
    code, out, _ = run(capsys, "simulate", bundled_config("table1_setting5"), "--controller", "zero",
                       "--t-end", "5", "--paths", "500", "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.strip().split("\n")[1:]]
    mean = np.array([float(r[1]) for r in rows])
    assert mean[-1] > 100 * mean[len(mean) // 10]


def test_simulate_feedback_bounded(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", bundled_config("scalar_benchmark"), "--controller", "feedback",
                     "--gain", "-3", "--t-end", "5", "--paths", "2000", "--seed", "3", "--u-hat", "3",
                     "--out", tmp_path)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["oracle_final_mean_x2"] == pytest.approx((1 - np.exp(-15)) / 3, rel=1e-6)
    assert summary["final_mean_x2"] < 1 / 3 + 4 * summary["final_stderr_x2"]
    assert summary["audit"]["passed"]


def test_simulate_deterministic(capsys):
    args = ("simulate", bundled_config("scalar_benchmark"), "--paths", "50", "--t-end", "1",
            "--seed", "9", "--format", "csv")
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def test_synth_noise(capsys, tmp_path):
    s6 = bundled_config("table1_setting6")
    run(capsys, "analyze", s6, "--out", tmp_path)
    code, out, _ = run(capsys, "synth-noise", s6, tmp_path / "certificate.json", "--u-hat", "2", "--alpha", "1")
    assert code == 0
    model = tmp_path / "m.json"
    model.write_text(out)
    code, out, _ = run(capsys, "certify", model)
    assert code == 0 and json.loads(out)["status"] == "Instabilizable"
