import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixstack.metrics import confusion, evaluate, format_report, macro_scores, report_json

from oracles import scores_by_scan


def random_pairs(rng):
    c = int(rng.integers(2, 6))
    n = int(rng.integers(1, 60))
    return rng.integers(0, c, size=n), rng.integers(0, c, size=n), c


def test_confusion_entries():
    assert confusion([0, 1], [0, 1], 2).counts.tolist() == [[1, 0], [0, 1]]
    assert confusion([0], [1], 2).counts[0, 1] == 1
    assert confusion([], [], 3).counts.sum() == 0


def test_confusion_rejects_length_mismatch_and_range():
    with pytest.raises(ValueError, match="entries"):
        confusion([0, 1], [0], 2)
    with pytest.raises(ValueError, match="range"):
        confusion([0, 2], [0, 1], 2)


def test_perfect_predictions():
    s = evaluate([0, 1, 2, 1], [0, 1, 2, 1], ["a", "b", "c"])
    assert (s.macro_precision, s.macro_recall, s.macro_f1, s.accuracy) == (1.0, 1.0, 1.0, 1.0)


def test_two_class_hand_example():
    # TP=1, FP=1, FN=1, TN=1 for class 1
    s = evaluate([1, 0, 1, 0], [1, 1, 0, 0], ["neg", "pos"])
    assert (s.macro_precision, s.macro_recall, s.macro_f1, s.accuracy) == (0.5, 0.5, 0.5, 0.5)


def test_absent_class_pulls_macro_down():
    s = evaluate([0, 0, 1, 1, 1], [0, 0, 1, 1, 1], ["a", "b", "c"])
    assert s.per_class["c"] == {"precision": 0.0, "recall": 0.0, "f1": 0.0, "support": 0}
    assert s.macro_f1 == pytest.approx(2 / 3, abs=1e-15)
    assert s.accuracy == 1.0


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        macro_scores(confusion([], [], 2))


def test_matches_scan_oracle_exactly():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        gold, pred, c = random_pairs(rng)
        s = evaluate(gold, pred, [str(i) for i in range(c)])
        o = scores_by_scan(gold.tolist(), pred.tolist(), c)
        assert (s.macro_precision, s.macro_recall, s.macro_f1, s.accuracy) == \
            (o["macro_precision"], o["macro_recall"], o["macro_f1"], o["accuracy"])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5).flatmap(lambda c: st.tuples(
    st.just(c), st.lists(st.tuples(st.integers(0, c - 1), st.integers(0, c - 1)), min_size=1, max_size=40),
    st.permutations(range(c)))))
def test_bounds_and_class_permutation(args):
    c, pairs, perm = args
    gold, pred = [g for g, _ in pairs], [p for _, p in pairs]
    s = evaluate(gold, pred, [str(i) for i in range(c)])
    f1s = [v["f1"] for v in s.per_class.values()]
    assert 0.0 <= s.macro_f1 <= 1.0 and 0.0 <= s.accuracy <= 1.0
    assert min(f1s) - 1e-12 <= s.macro_f1 <= max(f1s) + 1e-12
    t = evaluate([perm[g] for g in gold], [perm[p] for p in pred], [str(i) for i in range(c)])
    for key in ("macro_precision", "macro_recall", "macro_f1", "accuracy"):
        assert getattr(t, key) == pytest.approx(getattr(s, key), abs=1e-12)


def test_report_formats():
    s = evaluate([1, 0, 1, 0], [1, 1, 0, 0], ["neg", "pos"])
    text = format_report(s)
    assert "macro_f1=0.500000" in text.splitlines()
    assert "per_class.pos.support=2" in text.splitlines()
    flat = json.loads(report_json(s))
    assert {"macro_f1", "macro_precision", "macro_recall", "accuracy", "per_class.neg.f1"} <= set(flat)
