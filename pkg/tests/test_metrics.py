import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pivottree.metrics import balanced_accuracy, confusion_matrix, evaluate, macro_scores


def test_hand_example():
    cm = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]
    p, r, f, per_class = macro_scores(cm)
    assert per_class[0] == (1.0, 0.5, pytest.approx(2 / 3))
    assert per_class[1] == (0.5, 1.0, pytest.approx(2 / 3))
    assert r == 0.75 and p == 0.75
    assert f == pytest.approx(2 / 3)
    assert balanced_accuracy(cm) == 0.75


def test_missing_prediction_class_counts_as_zero_precision():
    cm = confusion_matrix([0, 1, 2], [0, 0, 0], 3)
    p, r, f, per_class = macro_scores(cm)
    assert per_class[1] == (0.0, 0.0, 0.0)
    assert r == pytest.approx(1 / 3)


def test_absent_true_class_is_left_out_of_the_mean():
    cm = confusion_matrix([0, 0, 1], [0, 2, 1], 3)
    assert balanced_accuracy(cm) == 0.75


@pytest.mark.parametrize("c", range(2, 7))
def test_constant_predictor(c):
    y = np.repeat(np.arange(c), 3)
    assert balanced_accuracy(confusion_matrix(y, np.zeros_like(y), c)) == 1 / c


def test_errors():
    with pytest.raises(ValueError, match="length"):
        confusion_matrix([0, 1], [0], 2)
    with pytest.raises(ValueError, match="out of range"):
        confusion_matrix([0, 3], [0, 1], 2)
    with pytest.raises(ValueError, match="empty"):
        macro_scores(np.zeros((2, 2), dtype=int))


labels = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40)


@settings(max_examples=150)
@given(labels, st.randoms(use_true_random=False))
def test_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate(*zip(*pairs), 4)
    b = evaluate(*zip(*shuffled), 4)
    assert np.array_equal(a.confusion, b.confusion)
    assert a.balanced_accuracy == b.balanced_accuracy


@settings(max_examples=150)
@given(labels)
def test_duplication_invariant(pairs):
    a = evaluate(*zip(*pairs), 4)
    b = evaluate(*zip(*(pairs * 2)), 4)
    assert a.balanced_accuracy == pytest.approx(b.balanced_accuracy, abs=1e-15)
    assert a.macro_f1 == pytest.approx(b.macro_f1, abs=1e-15)


def test_report_text_and_csv():
    rep = evaluate([0, 0, 1], [0, 1, 1], 2, ["benign", "malignant"])
    text = rep.to_text()
    assert "balanced accuracy: 0.7500" in text and "malignant" in text
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("class,precision,recall,f1,support,pred:benign")
    assert lines[-1] == "balanced_accuracy,0.75"
