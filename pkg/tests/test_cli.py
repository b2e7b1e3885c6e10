import json
import subprocess
import sys

import pytest

from cvse.cli import main
from cvse.io import read_json, read_matrix


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("gen-synthetic", "--seed", 7, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def trained(synth, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = run("train", "--config", synth / "config.json", "--out", out,
               "--set", "train.epochs=3", "--set", "train.lr_decay_epoch=3")
    assert code == 0
    return out


def test_gen_synthetic_is_byte_identical(synth, tmp_path):
    assert run("gen-synthetic", "--seed", 7, "--out", tmp_path) == 0
    for f in sorted(synth.iterdir()):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name


def test_build_graph_writes_every_stage(tmp_path, data_dir):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"paths": {"corpus": str(data_dir / "toy_corpus.jsonl"),
                                         "lexicon": str(data_dir / "toy_lexicon.tsv")},
                               "vocab": {"q": 10}}))
    assert run("build-graph", "--config", cfg, "--out", tmp_path / "g") == 0
    for stage in ("E", "N", "P", "B", "G", "A_norm"):
        m = read_matrix(tmp_path / "g" / f"{stage}.bin")
        side = read_json(tmp_path / "g" / f"{stage}.bin.json")
        assert side["stage"] == stage and side["params"]["s"] == 5.0
        assert m.shape == ((1, 10) if stage == "N" else (10, 10))
    assert (tmp_path / "g" / "vocab.tsv").exists()


def test_build_vocab(tmp_path, data_dir, capsys):
    code = run("build-vocab", "--set", f"paths.corpus={data_dir / 'toy_corpus.jsonl'}",
               "--set", f"paths.lexicon={data_dir / 'toy_lexicon.tsv'}", "--set", "vocab.q=10",
               "--out", tmp_path)
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert (report["Object"], report["Motion"], report["Property"]) == (7, 2, 1)


def test_train_outputs(trained):
    assert (trained / "checkpoint.bin").exists() and (trained / "vocab.tsv").exists()
    lines = (trained / "train_log.csv").read_text().splitlines()
    assert lines[0] == "step,L_F,L_I,L_C,D_KL,total" and len(lines) == 1 + 3 * 4


def test_eval_prints_metrics(synth, trained, capsys):
    capsys.readouterr()
    assert run("eval", "--config", synth / "config.json", "--checkpoint",
               trained / "checkpoint.bin", "--out", trained) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"r1_t", "r5_t", "r10_t", "r1_i", "r5_i", "r10_i", "mr"}
    assert read_json(trained / "metrics.json") == report


def test_retrieve_and_export(synth, trained):
    assert run("retrieve", "--config", synth / "config.json", "--out", trained) == 0
    rows = [json.loads(l) for l in (trained / "retrieval.jsonl").read_text().splitlines()]
    assert len(rows) == 128 and rows[0]["kind"] == "image" and len(rows[0]["ranked"]) == 10
    assert read_matrix(trained / "similarity.bin").shape == (64, 64)
    assert run("export-concepts", "--config", synth / "config.json", "--out", trained) == 0
    header, *body = (trained / "concepts.csv").read_text().splitlines()
    assert header.split(",")[:3] == ["index", "token", "z0"] and len(body) == 32
    assert len(header.split(",")) == 2 + 64
    assert (trained / "concept_scores.csv").read_text().startswith("item_id,concept_token,score")


def test_config_error_exit_3(synth, capsys):
    assert run("build-vocab", "--config", synth / "config.json", "--set", "graph.epsilonn=1") == 3
    err = capsys.readouterr().err.strip()
    assert err.startswith("error code=") and "key=graph.epsilonn" in err and "\n" not in err
    assert run("build-vocab", "--config", synth / "config.json", "--set", "model.beta=2") == 3


def test_runtime_error_exit_1(tmp_path, capsys):
    assert run("build-vocab", "--set", f"paths.corpus={tmp_path / 'missing.jsonl'}",
               "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("error code=IO_ERROR")


def test_usage_errors_exit_2():
    res = subprocess.run([sys.executable, "-m", "cvse.cli", "frobnicate"], capture_output=True)
    assert res.returncode == 2
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
