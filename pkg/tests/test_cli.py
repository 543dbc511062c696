import json

import pytest

from dysuse.cli import main, read_config, CliError
from dysuse.model import load


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert run("graph", "--seed", 1, "--out", d, "--n", 15, "--m", 2, "--t", 2) == 0
    g = d / "graph.txt"
    assert run("truth", "--seed", 1, "--out", d, "--graph", g, "--sizes", "1,2", "--sets", 3, "--sims", 50) == 0
    assert run("train", "--seed", 1, "--out", d, "--graph", g, "--truth", d / "truth.csv", "--epochs", 2, "--lr", 0.01) == 0
    return d


def test_happy_path(pipeline):
    d = pipeline
    g = d / "graph.txt"
    for name in ("graph.txt", "truth.csv", "model.ckpt", "train_log.csv", "train_loss.csv", "manifest.json"):
        assert (d / name).exists(), name
    assert load(d / "model.ckpt").config.T == 2
    assert run("eval", "--seed", 1, "--out", d, "--graph", g, "--truth", d / "truth.csv", "--checkpoint", d / "model.ckpt") == 0
    assert "MAE" in (d / "eval.txt").read_text()
    assert run("simulate", "--seed", 1, "--out", d / "sim", "--graph", g, "--seeds", "0,1", "--sims", 20) == 0
    assert (d / "sim" / "susceptibility.csv").exists()
    assert run("case-study", "--seed", 1, "--out", d / "case", "--graph", g, "--checkpoint", d / "model.ckpt", "--size", 2, "--k", 3, "--sims", 20) == 0
    assert "overlap" in (d / "case" / "topk.txt").read_text()
    assert run("bench", "--seed", 1, "--out", d / "bench", "--graph", g, "--checkpoint", d / "model.ckpt", "--runs", 1, "--sims", 10, "--size", 2) == 0
    assert "speed ratio" in (d / "bench" / "timing.txt").read_text()
    manifest = json.loads((d / "manifest.json").read_text())
    assert {"graph.txt", "truth.csv", "model.ckpt", "train_loss.csv"} <= set(manifest["artifacts"])
    assert "train_log.csv" not in manifest["artifacts"]
    assert [r["command"] for r in manifest["runs"]][:3] == ["graph", "truth", "train"]


def test_ablate(pipeline, tmp_path):
    d = pipeline
    rc = run("ablate", "--seed", 1, "--out", tmp_path, "--graph", d / "graph.txt", "--truth", d / "truth.csv",
             "--test-truth", d / "truth.csv", "--epochs", 1)
    assert rc == 0
    text = (tmp_path / "ablation.csv").read_text()
    for variant in ("full", "no-progressive", "no-attention"):
        assert variant in text


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny graph\nmaster_seed = 4\ngraph.n = 12\ngraph.m = 2\ngraph.t = 3  # snapshots\n")
    assert read_config(cfg)["seed"] == "4"
    assert run("graph", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("graph", "--config", cfg, "--out", tmp_path / "b", "--t", 2) == 0
    runs = [json.loads((tmp_path / x / "manifest.json").read_text())["runs"][0]["config"] for x in "ab"]
    assert runs[0]["graph.t"] == 3 and runs[1]["graph.t"] == 2
    assert runs[0]["seed"] == 4 and runs[0]["graph.n"] == 12
    bad = tmp_path / "bad.cfg"
    bad.write_text("graph.colour = red\n")
    with pytest.raises(CliError):
        read_config(bad)
    assert run("graph", "--config", bad, "--out", tmp_path / "c") == 2


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert run("graph", "--out", tmp_path / "x") == 2
    assert "master seed" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_eval_without_checkpoint_rolls_back(pipeline, tmp_path):
    out = tmp_path / "ev"
    rc = run("eval", "--seed", 1, "--out", out, "--graph", pipeline / "graph.txt", "--truth", pipeline / "truth.csv")
    assert rc == 1
    assert not out.exists()


def test_hash_mismatch_detected(pipeline, tmp_path):
    import shutil

    d = tmp_path / "copy"
    shutil.copytree(pipeline, d)
    with open(d / "truth.csv", "a") as fh:
        fh.write("\n")
    rc = run("train", "--seed", 1, "--out", tmp_path / "t", "--graph", d / "graph.txt", "--truth", d / "truth.csv", "--epochs", 1)
    assert rc == 1
    assert not (tmp_path / "t").exists()


def test_same_seed_same_bytes(tmp_path):
    for x in "ab":
        assert run("graph", "--seed", 7, "--out", tmp_path / x, "--n", 12, "--m", 2, "--t", 2) == 0
    assert (tmp_path / "a" / "graph.txt").read_bytes() == (tmp_path / "b" / "graph.txt").read_bytes()
    assert run("graph", "--seed", 8, "--out", tmp_path / "c", "--n", 12, "--m", 2, "--t", 2) == 0
    assert (tmp_path / "a" / "graph.txt").read_bytes() != (tmp_path / "c" / "graph.txt").read_bytes()
