import numpy as np
import pytest

from seqxfer import cli
from seqxfer.checkpoint import Checkpoint
from seqxfer.corpus import write_conll
from seqxfer.errors import DataError

from conftest import toy_ner_corpus

TINY_CFG = """\
# desk-scale test dimensions
d_char=6
d_out=12
lm_hidden=12
filter_widths=1,2
filter_counts=4,4
max_word_len=10
d_word=10
hidden=12
layers=1
dropout=0.0
unk_rate=0.0
batch_size=8
"""


@pytest.fixture
def ws(tmp_path):
    """Workspace with a config file, an LM corpus, and NER CoNLL files."""
    (tmp_path / "tiny.cfg").write_text(TINY_CFG)
    corpus = toy_ner_corpus(16)
    lm_text = "\n".join(" ".join(s.tokens) for s in corpus) + "\n"
    (tmp_path / "lm.txt").write_text(lm_text)
    write_conll(corpus[:12], tmp_path / "train.conll")
    write_conll(corpus[12:], tmp_path / "test.conll")
    return tmp_path


def _run(args):
    return cli.run([str(a) for a in args])


class TestConfig:
    def test_file_then_flag_override(self, ws):
        cfg = cli.load_config(ws / "tiny.cfg", {"seed": "7"})
        assert cfg.d_char == 6 and cfg.seed == 7

    def test_unknown_key_names_location(self, ws):
        (ws / "bad.cfg").write_text("no_such_knob=1\n")
        with pytest.raises(DataError, match="bad.cfg:1"):
            cli.load_config(ws / "bad.cfg")

    def test_bad_value_rejected(self, ws):
        (ws / "bad.cfg").write_text("epochs=three\n")
        with pytest.raises(DataError, match="epochs"):
            cli.load_config(ws / "bad.cfg")

    def test_comments_and_blanks_ignored(self, ws):
        cfg = cli.load_config(ws / "tiny.cfg")
        assert cfg.hidden == 12


class TestExitCodes:
    def test_usage_error_is_2(self, capsys):
        assert _run(["train-ner", "--no-such-flag"]) == 2
        capsys.readouterr()

    def test_unknown_command_is_2(self, capsys):
        assert _run(["frobnicate"]) == 2
        capsys.readouterr()

    def test_missing_file_is_1(self, ws, capsys):
        code = _run(["evaluate", "--gold", ws / "nope.conll",
                     "--pred", ws / "nope.conll"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_conll_is_1(self, ws, capsys):
        (ws / "bad.conll").write_text("token_without_tag\n\n")
        code = _run(["evaluate", "--gold", ws / "bad.conll",
                     "--pred", ws / "bad.conll"])
        assert code == 1
        capsys.readouterr()


class TestEvaluateAnalyzeConvert:
    def test_evaluate_prints_metrics(self, ws, capsys):
        code = _run(["evaluate", "--gold", ws / "train.conll",
                     "--pred", ws / "train.conll"])
        assert code == 0
        out = capsys.readouterr().out
        assert "f1 micro 100.00" in out

    def test_analyze_report(self, ws, capsys):
        code = _run(["analyze", "--corpus", ws / "train.conll",
                     "--test", ws / "test.conll"])
        assert code == 0
        out = capsys.readouterr().out
        assert "vocab_overlap" in out and "word_tag_overlap PER" in out

    def test_convert_bio_round_trip(self, ws, capsys):
        raw = "paris LOC\nis O\nhome O\n\n"
        (ws / "contig.conll").write_text(raw)
        code = _run(["convert-bio", "--corpus", ws / "contig.conll",
                     "--out", ws / "bio.conll"])
        assert code == 0
        assert (ws / "bio.conll").read_text() == "paris B-LOC\nis O\nhome O\n\n"
        capsys.readouterr()


class TestTrainingPipelines:
    def test_pretrain_finetune_and_provider_training(self, ws, capsys):
        lm_ck = ws / "lm.ckpt"
        assert _run(["pretrain-lm", "--config", ws / "tiny.cfg",
                     "--corpus", ws / "lm.txt", "--epochs", 1,
                     "--out", lm_ck]) == 0
        assert _run(["finetune-lm", "--config", ws / "tiny.cfg",
                     "--init", lm_ck, "--corpus", ws / "lm.txt",
                     "--epochs", 1, "--out", ws / "ft.ckpt"]) == 0
        ck = Checkpoint.load(ws / "ft.ckpt")
        events = [p["event"] for p in ck.manifest["provenance"]]
        assert events == ["pretrain", "replace_vocab_head", "continue_training"]
        assert _run(["train-ner", "--config", ws / "tiny.cfg",
                     "--init", ws / "ft.ckpt", "--train", ws / "train.conll",
                     "--test", ws / "test.conll", "--epochs", 1,
                     "--out", ws / "ner.ckpt"]) == 0
        out = capsys.readouterr().out
        assert "f1 micro" in out
        assert Checkpoint.load(ws / "ner.ckpt").architecture["kind"] == "tagger"

    def test_train_ner_rerun_is_bit_identical(self, ws, capsys):
        args = ["train-ner", "--config", ws / "tiny.cfg", "--seed", 3,
                "--train", ws / "train.conll", "--epochs", 2]
        assert _run(args + ["--out", ws / "a.ckpt"]) == 0
        assert _run(args + ["--out", ws / "b.ckpt"]) == 0
        capsys.readouterr()
        a = Checkpoint.load(ws / "a.ckpt")
        b = Checkpoint.load(ws / "b.ckpt")
        assert a.digest() == b.digest()

    def test_pos_then_transfer_init_writes_report(self, ws, capsys):
        pos = toy_ner_corpus(12)
        from seqxfer.corpus import LabeledSequence
        relabel = {"B-PER": "PROPN", "B-LOC": "PROPN", "O": "X"}
        write_conll([LabeledSequence(s.tokens, [relabel[t] for t in s.tags])
                     for s in pos], ws / "pos.conll")
        assert _run(["train-pos", "--config", ws / "tiny.cfg",
                     "--train", ws / "pos.conll", "--epochs", 1,
                     "--out", ws / "pos.ckpt"]) == 0
        assert _run(["transfer-init", "--config", ws / "tiny.cfg",
                     "--init", ws / "pos.ckpt", "--train", ws / "train.conll",
                     "--head", "crf", "--out", ws / "init.ckpt"]) == 0
        capsys.readouterr()
        report = (ws / "init.ckpt.report.txt").read_text()
        assert "copied" in report and "reinitialized" in report
        src = Checkpoint.load(ws / "pos.ckpt")
        ini = Checkpoint.load(ws / "init.ckpt")
        # trunk copied bit-exactly across the head swap
        for name in ini.tensors:
            if name.startswith("tagger.l"):
                assert np.array_equal(ini.tensors[name], src.tensors[name])
        assert "tagger.crf.trans" in ini.tensors
