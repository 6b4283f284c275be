import csv
import json
import os

import numpy as np
import pytest

from nbmf.cli import exposure_tag, main
from nbmf.core import HyperParams
from nbmf.persist import FittedModel, read_meta, save_model


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def read_trace(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["objective"]) for r in rows]


@pytest.fixture
def pipeline(workdir):
    assert run("simulate", "--users", 30, "--items", 25, "--k", 3, "--alpha", 1, "--seed", 7, "--out", "d") == 0
    assert run("split", "--input", "d/Y.tsv", "--seed", 1, "--out", "s") == 0
    return workdir


def test_simulate_writes_five_files(workdir):
    assert run("simulate", "--users", 50, "--items", 40, "--k", 3, "--alpha", 1, "--seed", 7, "--out", "d/") == 0
    assert sorted(os.listdir("d")) == ["A_true.csv", "H_true.csv", "W_true.csv", "Y.tsv", "manifest.json"]
    W = np.loadtxt("d/W_true.csv", delimiter=",")
    assert W.shape == (50, 3)


def test_simulate_twice_identical(workdir):
    for out in ("a", "b"):
        run("simulate", "--users", 10, "--items", 8, "--k", 2, "--alpha", 0.5, "--seed", 3, "--out", out)
    for name in ("Y.tsv", "W_true.csv", "H_true.csv", "A_true.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()


def test_validation_exit_codes(workdir):
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--users", 5, "--items", 4, "--k", 2, "--alpha", 0, "--seed", 1, "--out", "d")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("train", "--method", "nmf", "--k", 2, "--train", "x", "--seed", 0, "--out", "m")
    assert exc.value.code == 2


def test_unwritable_output_is_runtime_error(workdir):
    (workdir / "blocker").write_text("")
    assert run("simulate", "--users", 3, "--items", 3, "--k", 1, "--seed", 1, "--out", "blocker/sub") == 3


def test_missing_input_is_runtime_error(workdir):
    assert run("stats", "--input", "nope.tsv") == 3


def test_malformed_input_is_validation_error(workdir):
    (workdir / "bad.tsv").write_text("a\tb\n")
    assert run("stats", "--input", "bad.tsv") == 2


def test_manifest_fields(pipeline):
    with open("s/manifest.json") as fh:
        m = json.load(fh)
    assert m["command"] == "split" and m["seed"] == 1
    assert set(m["inputs"]) == {"d/Y.tsv"} and len(m["inputs"]["d/Y.tsv"]) == 64
    assert "s/train.tsv" in m["outputs"] and m["wall_time"] >= 0
    assert {"backend", "flags", "argv"} <= set(m)


@pytest.mark.parametrize("method, increasing", [("cavi", True), ("pf", True), ("mm", False)])
def test_train_trace_monotone(pipeline, method, increasing):
    assert run("train", "--method", method, "--k", 3, "--train", "s/train.tsv", "--vocab", "s",
               "--seed", 0, "--out", "m") == 0
    values = read_trace("m/trace.csv")
    steps = np.diff(values) * (1 if increasing else -1)
    assert np.all(steps >= -1e-9 * np.abs(values[:-1]))
    assert (pipeline / "m" / "q_a_mean.csv").exists() == (method == "cavi")


def test_train_pf_bin_records_binarized(pipeline):
    run("train", "--method", "pf-bin", "--k", 2, "--train", "s/train.tsv", "--seed", 0, "--out", "m")
    assert read_meta("m")["binarized"] == "true"
    run("train", "--method", "pf", "--k", 2, "--train", "s/train.tsv", "--seed", 0, "--out", "m2")
    assert read_meta("m2")["binarized"] == "false"


def oracle_model(workdir):
    """Model whose scores equal the held-out counts."""
    from nbmf.data import load_triplets, read_vocab

    users, items = read_vocab("s/users.txt"), read_vocab("s/items.txt")
    test = load_triplets("s/test.tsv", users, items).to_dense().astype(float)
    save_model(FittedModel(test, np.eye(len(items)), "mm", HyperParams(), False, users, items), "oracle")


def test_evaluate_oracle_scores_give_one(pipeline, capsys):
    oracle_model(pipeline)
    assert run("evaluate", "--model", "oracle", "--train", "s/train.tsv", "--test", "s/test.tsv",
               "--rel", "a", "--per-user", "pu.csv") == 0
    assert "\t1.0000000000" in capsys.readouterr().out
    with open("pu.csv") as fh:
        assert all(float(r["ndcg"]) == 1.0 for r in csv.DictReader(fh))


def test_evaluate_sweeps(pipeline):
    oracle_model(pipeline)
    assert run("evaluate", "--model", "oracle", "--train", "s/train.tsv", "--test", "s/test.tsv",
               "--sweep-s", "1,2,3,1000", "--sweep-out", "s.csv") == 0
    with open("s.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["s"] for r in rows] == ["1", "2", "3", "1000"]
    assert rows[-1]["ndcg"] == "nan"
    assert run("evaluate", "--train", "s/train.tsv", "--test", "s/test.tsv", "--vocab", "s",
               "--sweep-k", "1,2", "--seed", 0, "--max-iters", 20, "--sweep-out", "k.csv") == 0
    with open("k.csv") as fh:
        assert [r["k"] for r in csv.DictReader(fh)] == ["1", "2"]


def test_evaluate_frame_mismatch(pipeline):
    oracle_model(pipeline)
    (pipeline / "alien.tsv").write_text("stranger\ti0\t3\n")
    assert run("evaluate", "--model", "oracle", "--train", "s/train.tsv", "--test", "alien.tsv") == 2


def recommend_fixture(workdir):
    # Three users, four items; item 2 dominates every score.
    H = np.array([[1.0], [2.0], [50.0], [3.0]])
    W = np.ones((3, 1))
    exposure = np.array([[0, 0, 0.2], [0, 1, 1.0], [0, 3, 4.0]])
    save_model(FittedModel(W, H, "cavi", HyperParams(), False, ("a", "b", "c"), ("p", "q", "r", "s"),
                           exposure), "rm")
    (workdir / "train.tsv").write_text("a\tp\t1\na\tq\t2\na\ts\t9\nb\tr\t1\n")


def test_recommend(workdir, capsys):
    recommend_fixture(workdir)
    assert run("recommend", "--model", "rm", "--train", "train.tsv", "--user", "c", "--top", 2) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[2].split("\t")[:2] == ["1", "r"]
    assert lines[3].split("\t")[:2] == ["2", "s"]

    run("recommend", "--model", "rm", "--train", "train.tsv", "--user", "a", "--top", 10)
    out = capsys.readouterr().out.splitlines()
    ranked = [l.split("\t")[1] for l in out[2:] if l[:1].isdigit()]
    assert ranked == ["r"]  # consumed p, q, s excluded, no padding
    tags = {l.split("\t")[0]: l.split("\t")[3] for l in out if l.count("\t") == 3 and not l.startswith("item")}
    assert tags == {"s": "over", "q": "neutral", "p": "under"}


def test_recommend_unknown_user(workdir):
    recommend_fixture(workdir)
    assert run("recommend", "--model", "rm", "--train", "train.tsv", "--user", "zz") == 2


def test_exposure_tags():
    assert [exposure_tag(x) for x in (0.49, 0.5, 1.0, 2.0, 2.01)] == ["under", "neutral", "neutral", "neutral", "over"]


def test_export_and_stats(pipeline, capsys):
    assert run("export", "--input", "d/Y.tsv", "--out", "bin.tsv", "--binarize",
               "--min-items-per-user", 2, "--min-users-per-item", 2) == 0
    assert {line.split("\t")[2] for line in open("bin.tsv").read().splitlines()} == {"1"}
    assert run("stats", "--input", "d/Y.tsv", "--histogram", "h.csv") == 0
    assert "nonzeros" in capsys.readouterr().out
    assert open("h.csv").readline().strip() == "s,fraction_at_least_s"


def test_rerun_changed_input(pipeline):
    (pipeline / "d" / "Y.tsv").write_text("x\ty\t1\n")
    assert run("rerun", "s/manifest.json") == 2
