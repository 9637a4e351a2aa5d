import csv
import io
import json

import numpy as np
import pytest

from marlvm.harness.cli import cli


def run(capsys, *argv):
    code = cli(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_usage_errors(capsys):
    assert run(capsys, )[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "bounds", "scan", "--bogus", "1")[0] == 2
    assert run(capsys, "bounds")[0] == 2
    code, _, err = run(capsys, "dml", "train")
    assert code == 2 and "--data" in err


def test_verify_exit_zero(capsys):
    code, out, _ = run(capsys, "verify", "--seed", "0", "--trials", "20")
    assert code == 0
    assert json.loads(out)["meta.failed"] == 0


def test_bounds_scan_csv(capsys):
    args = ["bounds", "scan", "--format", "csv", "--m", "4", "--C1", "1", "--C3", "2", "--C", "0.005",
            "--grid", "0.1:1.5:0.1"]
    code, out, _ = run(capsys, *args)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    est = [float(r["estimation"]) for r in rows]
    app = [float(r["approximation"]) for r in rows]
    assert len(rows) == 15
    assert all(b <= a for a, b in zip(est, est[1:]))
    assert all(b >= a for a, b in zip(app, app[1:]))
    assert [float(r["theta"]) for r in rows if r["best"] == "True"] == [0.7]
    assert run(capsys, *args)[1] == out


def test_bounds_eval_and_bad_input(capsys):
    code, out, _ = run(capsys, "bounds", "eval", "--theta", "0.5")
    assert code == 0 and "estimation_squared" in json.loads(out)
    assert run(capsys, "bounds", "eval", "--tau", "2")[0] == 1
    assert run(capsys, "bounds", "scan", "--grid", "1.0,0.5")[0] == 1


def test_config_file_and_env(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bounds": {"m": 4, "C1": 1, "C3": 2, "C": 0.005, "grid": [0.5, 0.7, 0.9]}}))
    code, out, _ = run(capsys, "bounds", "scan", "--config", str(cfg))
    assert code == 0 and [r["theta"] for r in json.loads(out)] == [0.5, 0.7, 0.9]
    # flags override the config
    code, out, _ = run(capsys, "bounds", "scan", "--config", str(cfg), "--grid", "0.2,0.3")
    assert [r["theta"] for r in json.loads(out)] == [0.2, 0.3]
    ycfg = tmp_path / "c.yaml"
    ycfg.write_text("grid: [0.4, 0.6]\n")
    monkeypatch.setenv("MARLVM_CONFIG", str(ycfg))
    code, out, _ = run(capsys, "bounds", "scan")
    assert [r["theta"] for r in json.loads(out)] == [0.4, 0.6]


def test_missing_file_exit_one(capsys, tmp_path):
    assert run(capsys, "dml", "eval", "--model", str(tmp_path / "no.json"), "--data", str(tmp_path / "no.csv"))[0] == 1


def test_reg_and_opt(capsys, tmp_path):
    path = tmp_path / "A.csv"
    np.savetxt(path, np.array([[1.0, 0.0], [0.5, 0.5]]), delimiter=",")
    code, out, _ = run(capsys, "reg", "eval", "--matrix", str(path))
    assert code == 0 and "surrogate" in out
    code, _, _ = run(capsys, "reg", "grad", "--matrix", str(path), "--out", str(tmp_path / "g.json"))
    assert code == 0 and (tmp_path / "g.json").exists()
    code, out, _ = run(capsys, "opt", "run", "--K", "3", "--D", "3", "--lam", "1", "--out", str(tmp_path / "o.json"))
    assert code == 0
    assert json.loads(out)["mean_angle"] > 1.5
    code, _, _ = run(capsys, "reg", "eval", "--matrix", str(tmp_path / "o.json"))
    assert code == 0


def test_dml_pipeline(capsys, tmp_path):
    data = tmp_path / "f.csv"
    assert run(capsys, "synth", "--mode", "features", "--topics", "3", "--n", "90", "--dim", "4",
               "--out", str(data), "--seed", "1")[0] == 0
    model = tmp_path / "dml.json"
    assert run(capsys, "dml", "train", "--data", str(data), "--out", str(model), "--K", "3", "--lam", "0.1",
               "--outer-iters", "3", "--pairs", "100")[0] == 0
    code, out, _ = run(capsys, "dml", "eval", "--model", str(model), "--data", str(data), "--k", "5")
    metrics = json.loads(out)
    assert code == 0
    for key in ("average_precision", "precision_at_k", "clustering_accuracy", "nmi", "knn_accuracy"):
        assert 0.0 <= metrics[key] <= 1.0


def test_rbm_pipeline(capsys, tmp_path):
    docs = tmp_path / "d.txt"
    assert run(capsys, "synth", "--mode", "docs", "--topics", "3", "--n", "60", "--dim", "6",
               "--doc-length", "4", "--out", str(docs))[0] == 0
    model = tmp_path / "rbm.json"
    assert run(capsys, "rbm", "train", "--docs", str(docs), "--out", str(model), "--K", "3",
               "--epochs", "2", "--lr", "0.05", "--lam", "0.5", "--minibatch", "20")[0] == 0
    code, out, _ = run(capsys, "rbm", "eval", "--model", str(model), "--docs", str(docs))
    assert code == 0 and json.loads(out)["perplexity"] >= 1.0
    code, out, _ = run(capsys, "rbm", "topics", "--model", str(model), "--top", "2")
    assert code == 0 and out.strip()
    assert run(capsys, "rbm", "topics", "--model", str(tmp_path / "missing.json"))[0] == 1


def test_nn_pipeline(capsys, tmp_path):
    data = tmp_path / "f.csv"
    run(capsys, "synth", "--topics", "3", "--n", "120", "--dim", "5", "--out", str(data))
    model = tmp_path / "nn.json"
    assert run(capsys, "nn", "train", "--data", str(data), "--out", str(model), "--m", "3",
               "--epochs", "5", "--lam", "0.1")[0] == 0
    code, out, _ = run(capsys, "nn", "eval", "--model", str(model), "--data", str(data))
    assert code == 0 and 0 <= json.loads(out)["accuracy"] <= 1
    code, out, _ = run(capsys, "nn", "sweep", "--data", str(data), "--m", "3", "--epochs", "3",
                       "--lams", "0,0.1", "--format", "csv")
    assert code == 0 and out.strip()
    # a network model is not an RBM model
    assert run(capsys, "rbm", "topics", "--model", str(model))[0] == 1


def test_seeded_runs_reproducible(capsys, tmp_path):
    outs = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.json"
        run(capsys, "opt", "run", "--K", "3", "--D", "4", "--lam", "0.5", "--seed", "5", "--out", str(path))
        outs.append(path.read_text())
    assert outs[0] == outs[1]
