import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from krf.metrics import evaluate, f1_scores, hamming_loss, one_error, to_indicator


def test_one_error_examples():
    S = np.array([[0.9, 0.1, 0.0], [0.2, 0.7, 0.1], [0.1, 0.1, 0.8]])
    assert one_error(S, [{0}, {1}, {2}]) == 0.0
    assert one_error(S, [{1}, {2}, {0}]) == 1.0
    assert one_error(S, [{0}, {1}, {0}]) == pytest.approx(1 / 3)


def test_one_error_ties_use_lowest_index():
    assert one_error(np.array([[0.5, 0.5]]), [{0}]) == 0.0
    assert one_error(np.array([[0.5, 0.5]]), [{1}]) == 1.0


def test_one_error_empty_gold():
    with pytest.raises(ValueError):
        one_error(np.array([[0.1, 0.2]]), [set()])


def test_hamming_examples():
    assert hamming_loss([{0, 1}], [{0, 1}], 4) == 0.0
    assert hamming_loss([{2, 3}], [{0, 1}], 4) == 1.0
    assert hamming_loss([{0}], [{0, 1}], 4) == 0.25


def test_f1_examples():
    assert f1_scores([{0, 1}], [{0, 1}], 2)[:2] == (1.0, 1.0)
    # label A: TP=1 FP=1; label B: TP=1 FN=1
    macro, micro, per = f1_scores([{0}, {0, 1}], [{1}, {0, 1}], 2)
    assert (macro, micro) == (2 / 3, 2 / 3)
    assert per["f1"].tolist() == [2 / 3, 2 / 3]


def test_zero_support_label_counts_as_zero():
    macro, _, per = f1_scores([{0}], [{0}], 2)
    assert per["f1"][1] == 0.0 and macro == 0.5


def test_accepts_indicator_matrices():
    P = np.array([[1, 0, 1]])
    assert to_indicator([{0, 2}], 3).tolist() == P.tolist()
    assert f1_scores(P, P, 3)[1] == 1.0


@st.composite
def instances(draw):
    n_labels = draw(st.integers(1, 6))
    n = draw(st.integers(1, 8))
    labels = st.sets(st.integers(0, n_labels - 1), max_size=n_labels)
    pred = [draw(labels) for _ in range(n)]
    gold = [draw(st.sets(st.integers(0, n_labels - 1), min_size=1, max_size=n_labels)) for _ in range(n)]
    scores = draw(st.lists(st.lists(st.integers(-5, 5).map(float), min_size=n_labels, max_size=n_labels),
                           min_size=n, max_size=n))
    return n_labels, pred, gold, np.array(scores)


@settings(max_examples=300)
@given(instances())
def test_against_brute_force(inst):
    n_labels, pred, gold, scores = inst
    macro, micro, _ = f1_scores(pred, gold, n_labels)
    ref_macro, ref_micro = oracles.f1(pred, gold, n_labels)
    assert abs(macro - ref_macro) < 1e-12 and abs(micro - ref_micro) < 1e-12
    assert abs(hamming_loss(pred, gold, n_labels) - oracles.hamming(pred, gold, n_labels)) < 1e-12
    assert abs(one_error(scores, gold) - oracles.one_error(scores.tolist(), gold)) < 1e-12
    assert hamming_loss(pred, gold, n_labels) == hamming_loss(gold, pred, n_labels)


@settings(max_examples=100)
@given(instances(), st.randoms())
def test_micro_invariant_under_relabeling(inst, rnd):
    n_labels, pred, gold, _ = inst
    perm = list(range(n_labels))
    rnd.shuffle(perm)
    relabel = lambda sets: [{perm[c] for c in s} for s in sets]
    assert f1_scores(relabel(pred), relabel(gold), n_labels)[1] == pytest.approx(
        f1_scores(pred, gold, n_labels)[1], abs=1e-12)


def test_report():
    styles = ["rock", "pop", "jazz"]
    S = np.array([[2.0, 1.0, -1.0], [0.0, 3.0, 1.0]])
    rep = evaluate(S, [{0}, {1, 2}], [{0, 1}, {1}], styles)
    assert sum(v["support"] for v in rep.per_label.values()) == 3
    for v in (rep.one_error, rep.hamming_loss, rep.macro_f1, rep.micro_f1):
        assert 0.0 <= v <= 1.0
    data = json.loads(rep.to_json(split="test"))
    assert data["split"] == "test" and data["per_label"]["rock"]["f1"] == 1.0
    head = rep.table().splitlines()[0].split()
    assert head == ["OE", "HL", "Macro", "F1", "Micro", "F1"]
