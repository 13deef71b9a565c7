import os
import subprocess
import sys

import pytest

from chardense.cli import build_configs, main, make_parser
from chardense.toy import write_toy

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
SMALL = ["--rnn-size", "8", "--word-dim", "6", "--char-layer-size", "5", "--pre-rnn-size", "8",
         "--post-rnn-size", "8", "--epochs", "2", "--initial-batch", "4"]


@pytest.fixture(scope="module")
def toydir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    write_toy(d, n_train=24, n_dev=6, n_test=8)
    return d


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["train", "--bogus"]) == 1
    assert main(["train", "--data", "x"]) == 1  # missing --checkpoint
    assert main(["eval"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["tag", "--checkpoint", str(tmp_path / "nope"), "--input", "x"]) == 2
    assert "data error" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"chardense-ckpt-1\n\x05")
    assert main(["tag", "--checkpoint", str(p), "--input", str(p)]) == 2
    assert "truncated" in capsys.readouterr().err


def test_malformed_corpus_exits_2(tmp_path, capsys):
    p = tmp_path / "train.txt"
    p.write_text("a O\nb\n")
    assert main(["train", "--data", str(p), "--checkpoint", str(tmp_path / "m")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nrnn_size = 12\nepochs = 7\nhead = crf\npreset = ner\n")
    args = make_parser().parse_args(["--seed", "9", "train", "--data", "d", "--checkpoint", "c",
                                     "--config", str(cfg), "--epochs", "3"])
    mcfg, tcfg = build_configs(args)
    assert (mcfg.rnn_size, mcfg.head, mcfg.pre_rnn_size, mcfg.rnn_depth) == (12, "crf", None, 3)
    assert (tcfg.epochs, tcfg.seed, tcfg.initial_batch) == (3, 9, 16)
    cfg.write_text("nonsense = 1\n")
    assert main(["train", "--data", "d", "--checkpoint", "c", "--config", str(cfg)]) == 1


def test_train_tag_eval_closure(toydir, tmp_path, capsys):
    ckpt, logf, out = tmp_path / "m.ckpt", tmp_path / "log.tsv", tmp_path / "pred.txt"
    assert main(["train", "--data", str(toydir), "--checkpoint", str(ckpt), "--log", str(logf), *SMALL]) == 0
    assert len(logf.read_text().splitlines()) == 2
    assert main(["--threads", "2", "tag", "--checkpoint", str(ckpt), "--input", str(toydir / "test.txt"),
                 "--output", str(out)]) == 0
    lines = [l.split() for l in out.read_text().splitlines() if l]
    assert all(len(cols) == 3 for cols in lines)
    capsys.readouterr()
    assert main(["eval", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("accuracy:")
    acc = sum(c[1] == c[2] for c in lines) / len(lines) * 100
    assert f"{acc:6.2f}%" in text


def test_tag_tokens_only(toydir, tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(toydir / "train.txt"), "--dev", str(toydir / "dev.txt"),
                 "--checkpoint", str(ckpt), *SMALL]) == 0
    raw = tmp_path / "raw.txt"
    raw.write_text("BOFING\nhat\n\nzum\n")
    capsys.readouterr()
    assert main(["tag", "--checkpoint", str(ckpt), "--input", str(raw), "--no-gold"]) == 0
    rows = [l.split() for l in capsys.readouterr().out.splitlines() if l]
    assert [r[0] for r in rows] == ["BOFING", "hat", "zum"]
    assert all(len(r) == 2 for r in rows)


def test_eval_golden_fixture(capsys):
    assert main(["eval", os.path.join(FIXTURES, "conlleval_pair.txt")]) == 0
    with open(os.path.join(FIXTURES, "conlleval_expected.txt"), encoding="utf-8") as fh:
        assert capsys.readouterr().out == fh.read()


def test_eval_split_files(tmp_path, capsys):
    (tmp_path / "g").write_text("a B-X\nb I-X\n")
    (tmp_path / "p").write_text("a B-X\nb O\n")
    assert main(["eval", "--gold", str(tmp_path / "g"), "--pred", str(tmp_path / "p"), "--metric", "f1"]) == 0
    assert "FB1:   0.00" in capsys.readouterr().out
    (tmp_path / "p").write_text("a B-X\n")
    assert main(["eval", "--gold", str(tmp_path / "g"), "--pred", str(tmp_path / "p")]) == 2


def test_extract_features_sparse(capsys):
    assert main(["extract-features", "--word", "cat", "--sparse"]) == 0
    word, vals = capsys.readouterr().out.strip().split("\t")
    vec = [float(v) for v in vals.split(",")]
    assert word == "cat" and len(vec) == 81
    assert abs(sum(vec) - 1) < 1e-9


def test_extract_features_dense_needs_checkpoint(capsys):
    assert main(["extract-features", "--word", "cat", "--dense"]) == 1


def test_extract_features_dense_from_checkpoint(toydir, tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(toydir), "--checkpoint", str(ckpt), *SMALL]) == 0
    capsys.readouterr()
    assert main(["extract-features", "--checkpoint", str(ckpt), "--dense", "--word", "bofing"]) == 0
    vals = capsys.readouterr().out.strip().split("\t")[1].split(",")
    assert len(vals) == 5 and all(float(v) >= 0 for v in vals)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "chardense", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "extract-features" in r.stdout
