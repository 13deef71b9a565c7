import os

import pytest

from chardense.corpus import read_conll
from chardense.metrics import chunk_f1, extract_chunks, score, token_accuracy

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def _fixture():
    with open(os.path.join(FIXTURES, "conlleval_pair.txt"), encoding="utf-8") as fh:
        gold = read_conll(fh, tag_column=1)
    with open(os.path.join(FIXTURES, "conlleval_pair.txt"), encoding="utf-8") as fh:
        pred = read_conll(fh, tag_column=2)
    return [list(s.tags) for s in gold], [list(s.tags) for s in pred]


def test_extract_chunks():
    assert extract_chunks(["B-PER", "I-PER", "O", "B-LOC", "B-LOC", "I-ORG"]) == [
        ("PER", 0, 2), ("LOC", 3, 4), ("LOC", 4, 5), ("ORG", 5, 6)]
    assert extract_chunks(["I-PER", "I-PER"]) == [("PER", 0, 2)]
    assert extract_chunks(["O"]) == []


def test_boundary_mismatch_scores_zero():
    gold = ["B-PER", "I-PER", "O"]
    pred = ["B-PER", "O", "O"]
    m = chunk_f1(gold, pred)
    assert (m.correct, m.found, m.gold) == (0, 1, 1)
    assert m.f1 == 0.0


def test_perfect_and_empty():
    tags = [["B-A", "I-A", "O"], ["B-B"]]
    assert chunk_f1(tags, tags).f1 == 100.0
    empty = chunk_f1(["O", "O"], ["O", "O"])
    assert empty.precision == empty.recall == empty.f1 == 0.0


def test_hand_computed_prf():
    gold = ["B-A", "I-A", "O", "B-B", "O", "B-A"]
    pred = ["B-A", "I-A", "O", "B-A", "O", "O"]
    m = chunk_f1(gold, pred)
    assert m.precision == pytest.approx(50.0)
    assert m.recall == pytest.approx(100 / 3)
    assert m.f1 == pytest.approx(40.0)
    assert m.per_type["B"] == (0.0, 0.0, 0.0, 0)


def test_f1_symmetric_under_swap():
    gold, pred = _fixture()
    assert chunk_f1(gold, pred).f1 == pytest.approx(chunk_f1(pred, gold).f1)


def test_golden_fixture_parity():
    gold, pred = _fixture()
    with open(os.path.join(FIXTURES, "conlleval_expected.txt"), encoding="utf-8") as fh:
        expected = fh.read()
    m = chunk_f1(gold, pred)
    assert m.report() == expected
    first = expected.splitlines()[1]
    assert f"FB1: {m.f1:6.2f}" in first


def test_token_accuracy_pooled():
    gold = [["A"], ["A", "B", "C"]]
    pred = [["X"], ["A", "B", "C"]]
    # pooled 3/4, not the mean of per-sentence accuracies (0 + 1) / 2
    assert token_accuracy(gold, pred) == 75.0
    assert score(gold, pred, "accuracy") == 75.0


def test_length_mismatch_rejected():
    with pytest.raises(ValueError, match="sequence 0"):
        chunk_f1([["O", "O"]], [["O"]])
    with pytest.raises(ValueError):
        token_accuracy([["O"]], [["O"], ["O"]])
    with pytest.raises(ValueError):
        score([["O"]], [["O"]], "bleu")
