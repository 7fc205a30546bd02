import json

import numpy as np
import pytest

from tearlearn.cli import PipelineConfig, config_hash, main
from tearlearn.graph import is_acyclic, nonzero_streams
from tearlearn.io import read_matrix, write_matrix, write_prior
from tearlearn.milp import PriorSpec


def run(*argv):
    return main([str(a) for a in argv])


def files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_generate_deterministic_and_creates_dir(tmp_path):
    a, b = tmp_path / "x" / "a", tmp_path / "b"
    assert run("generate", "--d", 5, "--n", 100, "--seed", 7, "--out", a) == 0
    assert run("generate", "--d", 5, "--n", 100, "--seed", 7, "--out", b) == 0
    assert files(a) == files(b)
    assert {str(p) for p in files(a)} == {"data.csv", "truth.json", "prior.json"}
    assert (a / "data.csv").read_text().splitlines()[0] == "x0,x1,x2,x3,x4"


def test_generate_rejects_zero_samples(tmp_path):
    assert run("generate", "--n", 0, "--out", tmp_path) == 2


def test_usage_errors(tmp_path, capsys):
    assert run("bogus") == 2
    assert run("train", "--model", "other") == 2
    assert run("train", "--out", tmp_path) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text("")
    assert run("pipeline", "--config", cfg) == 2
    cfg.write_text("{}")
    assert run("pipeline", "--config", cfg) == 2
    cfg.write_text('{"nope": 1}')
    assert run("pipeline", "--config", cfg) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TEARLEARN_THREADS", "zero")
    assert run("generate", "--d", 3, "--n", 10, "--out", tmp_path) == 2
    monkeypatch.setenv("TEARLEARN_THREADS", "1")
    assert run("generate", "--d", 3, "--n", 10, "--out", tmp_path) == 0


def chain_csv(path, n=300):
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=n)
    x1 = 0.8 * x0 + rng.normal(size=n)
    x2 = -0.6 * x1 + rng.normal(size=n)
    with open(path, "w") as fh:
        fh.write("a,b,c\n")
        for row in np.column_stack([x0, x1, x2]):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def test_train_linear_outputs(tmp_path):
    chain_csv(tmp_path / "d.csv")
    out = tmp_path / "o"
    assert run("train", "--model", "linear", "--data", tmp_path / "d.csv", "--out", out) == 0
    A = read_matrix(out / "a_best.json")
    assert A.shape == (3, 3) and not np.diag(A).any()
    log = json.loads((out / "train_log.json").read_text())
    keys = [e["outer"] for e in log["h_trajectory"]]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    assert "wall_time_s" not in json.dumps(log)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["steps"]["train"]["wall_time_s"] >= 0
    assert manifest["standardized"] is True
    first = (out / "a_best.json").read_bytes()
    assert run("train", "--model", "linear", "--data", tmp_path / "d.csv", "--out", out) == 0
    assert (out / "a_best.json").read_bytes() == first


def test_train_daggnn_writes_checkpoint(tmp_path):
    chain_csv(tmp_path / "d.csv", 120)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"epochs": 2, "max_outer": 2}, "arch": {"hidden": 4}}))
    assert run("train", "--config", cfg, "--data", tmp_path / "d.csv", "--out", tmp_path / "o") == 0
    ck = json.loads((tmp_path / "o" / "checkpoint.json").read_text())
    assert ck["format"] == "tearlearn.daggnn_checkpoint" and ck["d"] == 3


def test_malformed_csv_exit_code(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("a,b\n1,2\n3,oops\n")
    assert run("train", "--data", tmp_path / "d.csv", "--out", tmp_path) == 3
    assert ":3:" in capsys.readouterr().err


def test_tear_and_truncate(tmp_path):
    write_matrix(tmp_path / "dag.json", np.triu(np.ones((3, 3)), 1))
    assert run("tear", "--matrix", tmp_path / "dag.json", "--out", tmp_path / "t0") == 0
    assert json.loads((tmp_path / "t0" / "tear_report.json").read_text())["rounds"] == 0
    A = np.zeros((4, 4))
    A[0, 1], A[1, 2], A[2, 0], A[2, 3], A[3, 2] = 0.9, 0.8, 0.1, 0.5, 0.2
    write_matrix(tmp_path / "cyc.json", A)
    for cmd in ("tear", "truncate"):
        assert run(cmd, "--matrix", tmp_path / "cyc.json", "--out", tmp_path / cmd) == 0
        B = read_matrix(tmp_path / cmd / "a_final.json")
        assert is_acyclic(nonzero_streams(B), 4)
    tear = json.loads((tmp_path / "tear" / "tear_report.json").read_text())
    trunc = json.loads((tmp_path / "truncate" / "tear_report.json").read_text())
    assert tear["total_torn_weight"] <= trunc["total_torn_weight"]
    assert tear["round_stats"][0]["optimal"]


def test_infeasible_tear_exit_code(tmp_path, capsys):
    A = np.array([[0, 1.0], [1.0, 0]])
    write_matrix(tmp_path / "a.json", A)
    write_prior(tmp_path / "p.json", PriorSpec(np.array([["U", "O"], ["O", "U"]])))
    assert run("tear", "--matrix", tmp_path / "a.json", "--prior", tmp_path / "p.json", "--out", tmp_path) == 4
    assert "infeasible" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path):
    chain_csv(tmp_path / "d.csv")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "linear", "standardize": False,
                               "train": {"learning_rate": 50.0, "grad_clip": None, "epochs": 5}}))
    assert run("train", "--config", cfg, "--data", tmp_path / "d.csv", "--out", tmp_path / "o") == 5


def test_eval(tmp_path, capsys):
    assert run("generate", "--d", 4, "--n", 200, "--seed", 1, "--out", tmp_path) == 0
    truth = json.loads((tmp_path / "truth.json").read_text())
    write_matrix(tmp_path / "est.json", np.asarray(truth["values"]).reshape(4, 4))
    assert run("eval", "--matrix", tmp_path / "est.json", "--truth", tmp_path / "truth.json",
               "--data", tmp_path / "data.csv", "--out", tmp_path) == 0
    scores = json.loads((tmp_path / "scores.json").read_text())
    assert scores["schema"] == "tearlearn.scores" and scores["schema_version"] == 1
    res = scores["results"]["estimate"]
    assert res["shd"] == 0 and res["gaussian_bic"] is not None
    assert run("eval", "--matrix", tmp_path / "est.json", "--out", tmp_path / "e") == 2


def test_eval_cyclic_matrix_skips_data_scores(tmp_path):
    assert run("generate", "--d", 3, "--n", 50, "--out", tmp_path) == 0
    write_matrix(tmp_path / "c.json", np.array([[0, 1.0, 0], [1.0, 0, 0], [0, 0, 0]]))
    assert run("eval", "--matrix", tmp_path / "c.json", "--data", tmp_path / "data.csv", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "scores.json").read_text())["results"]["estimate"]
    assert res["acyclic"] is False and res["gaussian_bic"] is None


def test_pipeline_d5_and_manifest(tmp_path):
    out = tmp_path / "p"
    assert run("pipeline", "--d", 5, "--n", 300, "--seed", 2, "--out", out) == 0
    for name in ("a_best.json", "train_log.json", "checkpoint.json", "tear/a_final.json",
                 "truncate/a_final.json", "scores.json", "manifest.json"):
        assert (out / name).exists(), name
    m = json.loads((out / "manifest.json").read_text())
    cfg = PipelineConfig.from_dict(m["config"], pipeline=True)
    assert config_hash(cfg) == m["config_sha256"]
    assert m["seeds"]["run"] == 2 and set(m["versions"]) >= {"numpy", "scipy", "tearlearn"}
    assert set(json.loads((out / "scores.json").read_text())["results"]) == {"tear", "truncate"}


def test_config_roundtrip():
    cfg = PipelineConfig.from_dict({"model": "linear", "seed": 4, "tear": {"omega": 0.2}})
    again = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and config_hash(again) == config_hash(cfg)
