import csv
import json
import subprocess
import sys

import pytest

from qcsim import acceptance, harness
from qcsim.cli import main
from qcsim.errors import ScenarioError

SMALL_CT = dict(gamma=10.0, kappa_c=1.0, x0=0.0, sigma0=1.0, omega_s=1.0, dims=(8, 5), grid_spacing=1.5)


def test_impulse_noise_summary(tmp_path):
    cfg = harness.ExperimentConfig("impulse-noise", output_dir=str(tmp_path))
    s = harness.run(cfg)
    assert s.metrics["momentum_variance_error"] < 1e-3
    assert s.passed
    doc = json.loads((tmp_path / "impulse-noise_summary.json").read_text())
    assert doc["schema_version"] == harness.SCHEMA_VERSION
    assert set(doc["roles"]) == set(doc["metrics"])
    assert all(r == "diagnostic" or r.startswith("AC") for r in doc["roles"].values())


def test_ensemble_convergence_is_monotone():
    base = dict(scenario=SMALL_CT, dt=1e-3, t_final=0.1, seed=3)
    tds = [harness.run(harness.ExperimentConfig("ensemble-vs-master", n_traj=n, **base)).metrics["max_trace_distance"]
           for n in (1, 30, 300)]
    assert tds[0] > tds[1] > tds[2]


def test_outputs_byte_identical(tmp_path):
    cfg = dict(scenario=SMALL_CT, n_traj=20, dt=1e-3, t_final=0.05, seed=9)
    for d in ("a", "b"):
        harness.run(harness.ExperimentConfig("ensemble-vs-master", output_dir=str(tmp_path / d), **cfg))
    for name in ("ensemble-vs-master_summary.json", "ensemble-vs-master_comparison.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "ensemble-vs-master_comparison.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["time", "trace_distance_re", "trace_distance_im"]
    assert len(rows) == 12


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        harness.ExperimentConfig("no-such-experiment")
    with pytest.raises(ValueError):
        harness.ExperimentConfig("impulse-noise", dt=-1.0)
    with pytest.raises(ScenarioError):
        harness.ExperimentConfig("impulse-noise", scenario=SMALL_CT).resolved()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"experiment": "impulse-noise", "seed": 4}))
    cfg = harness.ExperimentConfig.from_file(p, seed=7, n_traj=None)
    assert cfg.seed == 7
    p.write_text(json.dumps({"experiment": "impulse-noise", "bogus": 1}))
    with pytest.raises(ValueError):
        harness.ExperimentConfig.from_file(p)


def test_cli_unknown_experiment_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "no-such-experiment"])
    assert err.value.code != 0


def test_cli_run_and_validate(tmp_path, capsys):
    assert main(["run", "impulse-noise", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "impulse-noise_summary.json").exists()
    good = tmp_path / "s.json"
    good.write_text(json.dumps({"type": "impulse", "kappa_c": 1.0, "q_bar": 0.0, "sigma": 0.0025}))
    assert main(["validate-scenario", str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"type": "impulse", "kappa_c": 1.0}))
    assert main(["validate-scenario", str(bad)]) == 2
    assert "invalid scenario" in capsys.readouterr().err
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "impulse-noise", "scenario": {"kappa_c": 1.0, "q_bar": 0.0,
                                                                          "sigma": 0.0025}}))
    assert main(["run", "--config", str(cfg), "--seed", "5"]) == 0


def test_acceptance_single_and_corrupted_tolerance(tmp_path, capsys):
    ok, results = acceptance.run_acceptance(["AC3"], tmp_path / "ok", echo=None)
    assert ok and [r.cid for r in results] == ["AC3"]
    code = main(["acceptance", "AC3", "--out", str(tmp_path / "bad"),
                 "--tolerance", "AC3.relative_error=1e-30"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL AC3" in out
    report = json.loads((tmp_path / "bad" / "acceptance.json").read_text())
    assert report["criteria"][0]["id"] == "AC3" and not report["passed"]
    with pytest.raises(ValueError):
        acceptance.parse_overrides(["AC3.nope=1"])


def test_acceptance_reproducibility_small(tmp_path):
    ok, results = acceptance.run_acceptance(["AC1", "AC10", "AC11"], tmp_path, echo=None)
    assert {r.cid: r.ok for r in results}["AC11"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qcsim", "acceptance", "--list"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "AC11" in proc.stdout
