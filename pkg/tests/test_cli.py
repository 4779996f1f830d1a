"""CLI contract: exit codes, stdout purity, manifests, output schemas."""

import io
import json
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from replyrank.cli import ABLATION_ROWS, _git_blob_sha1, main
from replyrank.datagen import make_random_corpus, write_jsonl

MICRO = ["--set", "d=8", "--set", "n_layers=1", "--set", "n_heads=2",
         "--set", "m=3", "--set", "l_ctx=12", "--set", "l_resp=5",
         "--set", "epochs=2", "--set", "batch_size=4",
         "--set", "dropout=0.1", "--set", "seed=3"]


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = main(argv)
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(11)
    write_jsonl(root / "train.jsonl", make_random_corpus(10, 3, rng, n_words=18))
    write_jsonl(root / "dev.jsonl", make_random_corpus(6, 3, rng, n_words=18))
    nogold = make_random_corpus(5, 3, rng, n_words=18)
    for row in nogold:
        del row["answer"]
    write_jsonl(root / "nogold.jsonl", nogold)
    return root


@pytest.fixture(scope="module")
def trained(workdir):
    out_dir = workdir / "run"
    rc, out, err = run_cli(["train",
                            "--train", str(workdir / "train.jsonl"),
                            "--dev", str(workdir / "dev.jsonl"),
                            "--out", str(out_dir)] + MICRO)
    assert rc == 0
    return out_dir, out, err


class TestTrain:
    def test_stdout_is_data_only(self, trained):
        _, out, err = trained
        assert out == ""
        assert "epoch 0" in err

    def test_artifacts_written(self, trained):
        out_dir, _, _ = trained
        for name in ("manifest.json", "best.ckpt", "final.ckpt",
                     "epochs.jsonl"):
            assert (out_dir / name).is_file()

    def test_manifest_contents(self, trained, workdir):
        out_dir, _, _ = trained
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["config"]["d"] == 8
        assert manifest["config"]["seed"] == 3
        assert set(manifest["datasets"]) == {"train", "dev"}
        want = _git_blob_sha1(workdir / "train.jsonl")
        assert manifest["datasets"]["train"]["sha1"] == want

    def test_epoch_log_schema(self, trained):
        out_dir, _, _ = trained
        lines = (out_dir / "epochs.jsonl").read_text().splitlines()
        assert len(lines) == 2
        for line in lines:
            entry = json.loads(line)
            assert {"epoch", "train_nll", "dev_r_at_1", "dev_mrr"} <= set(entry)

    def test_missing_dataset_exit_3(self, workdir):
        rc, _, err = run_cli(["train", "--train", str(workdir / "ghost.jsonl"),
                              "--dev", str(workdir / "dev.jsonl"),
                              "--out", str(workdir / "x")] + MICRO)
        assert rc == 3
        assert "data error" in err

    def test_bad_config_key_exit_2(self, workdir):
        rc, _, err = run_cli(["train", "--train", str(workdir / "train.jsonl"),
                              "--dev", str(workdir / "dev.jsonl"),
                              "--out", str(workdir / "x"),
                              "--set", "banana=1"])
        assert rc == 2
        assert "config error" in err

    def test_malformed_set_exit_2(self, workdir):
        rc, _, _ = run_cli(["train", "--train", str(workdir / "train.jsonl"),
                            "--dev", str(workdir / "dev.jsonl"),
                            "--out", str(workdir / "x"), "--set", "d16"])
        assert rc == 2

    def test_m_mismatch_exit_2(self, workdir):
        rc, _, err = run_cli(["train", "--train", str(workdir / "train.jsonl"),
                              "--dev", str(workdir / "dev.jsonl"),
                              "--out", str(workdir / "x")])
        assert rc == 2              # default m=4, data has 3 options
        assert "config expects m=4" in err


class TestEval:
    def test_report_to_stdout(self, trained, workdir):
        out_dir, _, _ = trained
        rc, out, err = run_cli(["eval", "--ckpt", str(out_dir / "best.ckpt"),
                                "--data", str(workdir / "dev.jsonl")])
        assert rc == 0
        report = json.loads(out)
        assert set(report) == {"r_at_1", "r_at_2", "mrr", "n", "per_example"}
        assert report["n"] == 6
        assert "R@1=" in err

    def test_report_to_file(self, trained, workdir):
        out_dir, _, _ = trained
        dest = out_dir / "report.json"
        rc, out, _ = run_cli(["eval", "--ckpt", str(out_dir / "best.ckpt"),
                              "--data", str(workdir / "dev.jsonl"),
                              "--report", str(dest)])
        assert rc == 0
        assert out == ""
        assert json.loads(dest.read_text())["n"] == 6

    def test_eval_is_deterministic(self, trained, workdir):
        out_dir, _, _ = trained
        args = ["eval", "--ckpt", str(out_dir / "final.ckpt"),
                "--data", str(workdir / "dev.jsonl")]
        _, out1, _ = run_cli(args)
        _, out2, _ = run_cli(args)
        assert out1 == out2

    def test_bad_checkpoint_exit_3(self, workdir):
        junk = workdir / "junk.ckpt"
        junk.write_bytes(b"definitely not a checkpoint")
        rc, _, _ = run_cli(["eval", "--ckpt", str(junk),
                            "--data", str(workdir / "dev.jsonl")])
        assert rc == 3


class TestScore:
    def test_gold_free_scoring(self, trained, workdir):
        out_dir, _, _ = trained
        rc, out, _ = run_cli(["score", "--ckpt", str(out_dir / "best.ckpt"),
                              "--data", str(workdir / "nogold.jsonl")])
        assert rc == 0
        lines = out.strip().splitlines()
        assert len(lines) == 5
        for line in lines:
            row = json.loads(line)
            assert set(row) == {"probs", "ranking", "pred"}
            assert sorted(row["ranking"]) == [0, 1, 2]
            assert row["pred"] == row["ranking"][0]
            assert sum(row["probs"]) == pytest.approx(1.0)

    def test_m_mismatch_exit_2(self, trained, workdir):
        out_dir, _, _ = trained
        wrong = workdir / "wrong_m.jsonl"
        write_jsonl(wrong, make_random_corpus(2, 4, np.random.default_rng(0)))
        rc, _, err = run_cli(["score", "--ckpt", str(out_dir / "best.ckpt"),
                              "--data", str(wrong)])
        assert rc == 2
        assert "checkpoint expects m=3" in err


class TestGradcheck:
    def test_micro_config_passes(self):
        rc, out, err = run_cli(["gradcheck", "--set", "d=4",
                                "--set", "n_layers=0", "--set", "n_heads=2",
                                "--set", "m=2", "--set", "l_ctx=6",
                                "--set", "l_resp=3", "--set", "seed=0"])
        assert rc == 0
        assert out == ""
        assert "gradcheck: PASS" in err
        assert "dropout disabled" in err     # default dropout is 0.2


class TestAblate:
    def test_all_rows_reported(self, workdir):
        rc, out, _ = run_cli(["ablate",
                              "--train", str(workdir / "train.jsonl"),
                              "--dev", str(workdir / "dev.jsonl"),
                              "--set", "d=4", "--set", "n_layers=0",
                              "--set", "n_heads=2", "--set", "m=3",
                              "--set", "l_ctx=10", "--set", "l_resp=4",
                              "--set", "epochs=1", "--set", "dropout=0",
                              "--set", "seed=0"])
        assert rc == 0
        rows = [json.loads(line) for line in out.strip().splitlines()]
        assert [r["variant"] for r in rows] == [lab for lab, _ in ABLATION_ROWS]
        for row in rows:
            assert set(row) == {"variant", "r_at_1", "r_at_2", "mrr", "epoch"}
            assert 0.0 <= row["r_at_1"] <= row["r_at_2"] <= 1.0
            assert 0.0 < row["mrr"] <= 1.0


def test_git_blob_sha1_known_vector(tmp_path):
    # must equal `git hash-object` for the same bytes
    p = tmp_path / "hello.txt"
    p.write_bytes(b"hello\n")
    assert _git_blob_sha1(p) == "ce013625030ba8dba906f756967f9e9ca394464a"
