import json

import numpy as np
import pytest

from adpmcmc.cli import EXIT_ARGS, EXIT_DOMAIN, EXIT_OK, main
from adpmcmc.data import CONFIG_ENV, load_record, load_series

M2_PARAMS = json.dumps({"b0": 0.15, "b2": -0.125, "b3": 0.1, "sigma_eps2": 0.2209, "sigma_w2": 0.1521,
                        "x0": 0.239})
QUICK = ["--L", "30", "--n-anneal", "40", "--n-burn", "60", "--n-sample", "100", "--seed", "1"]


@pytest.fixture
def simulated(tmp_path):
    data, truth = tmp_path / "sim.csv", tmp_path / "truth.json"
    code = main(["simulate", "--model", "M2", "--params", M2_PARAMS, "--T", "25", "--seed", "3",
                 "--out", str(data), "--truth-out", str(truth)])
    assert code == EXIT_OK
    return data, truth


def test_simulate_writes_series_and_truth(simulated):
    data, truth = simulated
    series = load_series(data, log_transform=False)
    doc = json.loads(truth.read_text())
    assert series.T == 25 and len(doc["x_true"]) == 25 and doc["params"]["b3"] == 0.1


def test_fit_then_reports(simulated, tmp_path, capsys):
    data, truth = simulated
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(data), "--no-log-transform", "--model", "M2", "--truth", str(truth),
                 "--out-dir", str(out), *QUICK]) == EXIT_OK
    for name in ("draws.csv", "chain.npz", "summary.json", "path_bands.csv", "series.csv"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_draws"] == 100 and "bcrlb" in summary and "blocked_rmse" in summary
    assert set(summary["ci95"]) == {"b0", "b2", "b3", "sigma_eps2", "sigma_w2", "x0"}
    assert len(load_record(out)) == 100

    assert main(["bcrlb", str(out), "--out", str(tmp_path / "b.json")]) == EXIT_OK
    assert json.loads((tmp_path / "b.json").read_text())["avg_root_bound"] == pytest.approx(
        summary["bcrlb"]["avg_root_bound"])
    assert main(["diagnose", str(out), "--max-lag", "5", "--out", str(tmp_path / "d.json")]) == EXIT_OK
    diag = json.loads((tmp_path / "d.json").read_text())
    assert len(diag["params"]["b0"]["acf"]) == 6
    assert "geweke" in capsys.readouterr().out


def test_evidence_and_compare(simulated, tmp_path, capsys):
    data, _ = simulated
    ev = tmp_path / "ev.json"
    assert main(["evidence", "--data", str(data), "--no-log-transform", "--models", "M0", "M1",
                 "--S", "40", "--L", "20", "--seed", "2", "--out", str(ev)]) == EXIT_OK
    est = json.loads(ev.read_text())["estimates"]
    assert [e["model"] for e in est] == ["M0", "M1"]
    capsys.readouterr()
    assert main(["compare", str(ev), "--out", str(tmp_path / "bf.json")]) == EXIT_OK
    table = capsys.readouterr().out
    assert "M0" in table and "M1" in table
    bf = json.loads((tmp_path / "bf.json").read_text())
    assert np.allclose(np.array(bf["log_bf"]), -np.array(bf["log_bf"]).T)
    assert bf["bf"][0][0] == 1.0


def test_posterior_evidence_method(simulated, tmp_path):
    data, _ = simulated
    ev = tmp_path / "ev.json"
    assert main(["evidence", "--data", str(data), "--no-log-transform", "--models", "M0", "--method", "posterior",
                 "--S", "30", *QUICK, "--out", str(ev)]) == EXIT_OK
    assert json.loads(ev.read_text())["estimates"][0]["method"] == "posterior-mixture"


def test_config_file_and_environment(simulated, tmp_path, monkeypatch):
    data, _ = simulated
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": "M0", "log_transform": False, "out_dir": str(tmp_path / "env-fit"),
                               "sampler": {"L": 20, "n_anneal": 10, "n_burn": 30, "n_sample": 50}}))
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    assert main(["fit", "--data", str(data), "--config", str(tmp_path / "ignored.json")]) == EXIT_OK
    assert len(load_record(tmp_path / "env-fit")) == 50


def test_bench_commands(tmp_path, capsys):
    args = ["--n-anneal", "20", "--n-burn", "40", "--n-sample", "60", "--L", "20", "--T", "20"]
    assert main(["bench", "acceptance", "--datasets", "1", "--L-values", "5", "20", *args,
                 "--out", str(tmp_path / "a.json")]) == EXIT_OK
    assert len(json.loads((tmp_path / "a.json").read_text())["acceptance"][0]) == 2
    assert main(["bench", "rmse", "--datasets", "1", *args]) == EXIT_OK
    assert main(["bench", "bayes-factors", "--datasets", "1", "--S", "10", *args]) == EXIT_OK
    assert "dataset 1" in capsys.readouterr().out


def test_exit_codes(tmp_path, simulated):
    data, _ = simulated
    assert main(["fit"]) == EXIT_ARGS
    assert main(["simulate", "--model", "M9", "--params", "{}", "--T", "5", "--out", str(tmp_path / "x")]) == EXIT_ARGS
    assert main(["simulate", "--model", "M0", "--T", "5", "--out", str(tmp_path / "x")]) == EXIT_ARGS
    bad = tmp_path / "bad.csv"
    bad.write_text("1,5\n2,0\n")
    assert main(["fit", "--data", str(bad), "--model", "M0", *QUICK]) == EXIT_ARGS
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--model", "M0"]) == EXIT_ARGS
    blowup = json.dumps({"b0": 50.0, "b1": 1.0, "sigma_eps2": 0.0, "sigma_w2": 0.0, "x0": 5.0})
    assert main(["simulate", "--model", "M1", "--params", blowup, "--T", "10",
                 "--out", str(tmp_path / "y.csv")]) == EXIT_DOMAIN
    assert main(["--help"]) == EXIT_OK
