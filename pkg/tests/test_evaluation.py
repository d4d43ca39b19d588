import pytest

from seqxfer import evaluation as ev
from seqxfer.corpus import LabeledSequence
from seqxfer.errors import ContractError, DataError


def seq(tokens, tags):
    return LabeledSequence(tokens, tags)


def pair(gold_tags, pred_tags):
    toks = [f"w{i}" for i in range(len(gold_tags))]
    return seq(toks, gold_tags), seq(toks, pred_tags)


class TestSpanF1:
    def test_perfect_prediction(self):
        g, p = pair(["B-PER", "I-PER", "O"], ["B-PER", "I-PER", "O"])
        m = ev.span_f1([g], [p])
        assert m.micro() == (1.0, 1.0, 1.0)

    def test_boundary_error_costs_both_ways(self):
        # predicted span too short: one fp and one fn
        g, p = pair(["B-PER", "I-PER", "O"], ["B-PER", "O", "O"])
        m = ev.span_f1([g], [p])
        assert m.counts["PER"] == [0, 1, 1]
        assert m.micro_f1 == 0.0

    def test_type_error_counts_under_both_types(self):
        g, p = pair(["B-PER", "O"], ["B-LOC", "O"])
        m = ev.span_f1([g], [p])
        assert m.counts["PER"] == [0, 0, 1]
        assert m.counts["LOC"] == [0, 1, 0]

    def test_hand_computed_mixed_batch(self):
        gold = [
            seq(["a", "b", "c"], ["B-PER", "I-PER", "O"]),
            seq(["d", "e"], ["B-LOC", "O"]),
            seq(["f", "g", "h"], ["O", "B-ORG", "I-ORG"]),
        ]
        pred = [
            seq(["a", "b", "c"], ["B-PER", "I-PER", "O"]),   # tp PER
            seq(["d", "e"], ["B-LOC", "B-LOC"]),             # tp LOC + fp LOC
            seq(["f", "g", "h"], ["O", "B-ORG", "O"]),       # fp+fn ORG
        ]
        m = ev.span_f1(gold, pred)
        # tp=2 fp=2 fn=1 -> p=0.5 r=2/3 f=4/7
        p, r, f = m.micro()
        assert p == pytest.approx(0.5)
        assert r == pytest.approx(2 / 3)
        assert f == pytest.approx(4 / 7)

    def test_prediction_repair_orphan_i(self):
        g, p = pair(["B-PER", "O"], ["I-PER", "O"])
        m = ev.span_f1([g], [p])
        assert m.micro() == (1.0, 1.0, 1.0)  # orphan I-PER repaired to B-PER

    def test_gold_is_strict(self):
        g, p = pair(["I-PER", "O"], ["O", "O"])
        with pytest.raises(DataError):
            ev.span_f1([g], [p])

    def test_no_entities_anywhere_is_zero_not_nan(self):
        g, p = pair(["O", "O"], ["O", "O"])
        m = ev.span_f1([g], [p])
        assert m.micro() == (0.0, 0.0, 0.0)

    def test_length_mismatch_names_sentence(self):
        g = seq(["a", "b"], ["O", "O"])
        p = seq(["a"], ["O"])
        with pytest.raises(ContractError, match="sentence 0"):
            ev.span_f1([g], [p])

    def test_sentence_count_mismatch(self):
        g, p = pair(["O"], ["O"])
        with pytest.raises(ContractError):
            ev.span_f1([g, g], [p])

    def test_duplicate_span_counted_once(self):
        # identical span sets on both sides regardless of token identity
        g, p = pair(["B-PER", "B-PER"], ["B-PER", "B-PER"])
        m = ev.span_f1([g], [p])
        assert m.counts["PER"] == [2, 0, 0]


class TestAnnotationQuality:
    def test_silver_scored_against_clean(self):
        clean = [seq(["a", "b"], ["B-PER", "O"])]
        silver = [seq(["a", "b"], ["B-PER", "B-LOC"])]
        m = ev.annotation_quality(silver, clean)
        assert m.micro_precision == pytest.approx(0.5)
        assert m.micro_recall == pytest.approx(1.0)


class TestReports:
    def test_to_text_two_decimals(self):
        g, p = pair(["B-PER", "I-PER", "O"], ["B-PER", "O", "O"])
        text = ev.span_f1([g], [p]).to_text()
        assert "0.00" in text and "micro" in text

    def test_to_kv_round_trip_values(self):
        gold = [seq(["a", "b", "c"], ["B-PER", "O", "B-LOC"])]
        pred = [seq(["a", "b", "c"], ["B-PER", "O", "O"])]
        kv = ev.span_f1(gold, pred).to_kv()
        assert "f1 micro 66.67" in kv
        assert "recall PER 100.00" in kv


class TestOverlap:
    def test_vocab_overlap_reference_denominator(self):
        a = [["x", "y", "z"]]
        b = [["x", "q"]]
        assert ev.vocab_overlap(a, b) == pytest.approx(0.5)
        assert ev.vocab_overlap(b, a) == pytest.approx(1 / 3)

    def test_vocab_overlap_types_not_tokens(self):
        a = [["x", "x", "x"]]
        b = [["x", "x", "y", "y"]]
        assert ev.vocab_overlap(a, b) == pytest.approx(0.5)

    def test_case_insensitive_mode(self):
        a = [["Amerika"]]
        b = [["amerika", "lain"]]
        assert ev.vocab_overlap(a, b) == 0.0
        assert ev.vocab_overlap(a, b, case_sensitive=False) == pytest.approx(0.5)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ContractError):
            ev.vocab_overlap([[]], [["a"]])

    def test_word_tag_overlap_hand_computed(self):
        a = [seq(["Mira", "went", "home"], ["B-PER", "O", "O"]),
             seq(["Oslo", "Mira"], ["B-LOC", "B-PER"])]
        b = [seq(["Mira", "pergi", "Oslo"], ["B-PER", "O", "B-LOC"]),
             seq(["Rian", "pergi"], ["B-PER", "O"])]
        rates = ev.word_tag_overlap(a, b)
        assert rates["PER"] == pytest.approx(0.5)   # Mira yes, Rian no
        assert rates["LOC"] == pytest.approx(1.0)
        assert rates["O"] == pytest.approx(0.0)     # pergi unseen as O in A
        assert rates["ORG"] == 0.0                  # absent tag -> 0

    def test_bi_prefixes_collapse_to_type(self):
        a = [seq(["New", "York"], ["B-LOC", "I-LOC"])]
        b = [seq(["York"], ["B-LOC"])]
        assert ev.word_tag_overlap(a, b)["LOC"] == pytest.approx(1.0)

    def test_overlap_report_format(self):
        a = [seq(["x"], ["O"])]
        b = [seq(["x", "y"], ["O", "O"])]
        rep = ev.overlap_report(a, b, name_a="wiki", name_b="gold")
        assert "reference_corpus gold" in rep
        assert "vocab_overlap 50.00" in rep
