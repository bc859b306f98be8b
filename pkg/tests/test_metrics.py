import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sim2real_radar.metrics import (
    ConfusionMatrix,
    balanced_accuracy,
    confusion_matrix,
    overall_accuracy,
    plot_confusion,
    read_confusion_csv,
    read_metrics_csv,
    write_confusion_csv,
    write_metrics_csv,
)


def test_hand_computed_example_is_exact():
    assert balanced_accuracy(ConfusionMatrix(np.array([[45, 5], [20, 30]]))) == 0.75


@pytest.mark.parametrize("k", [2, 3, 5])
def test_identity_and_zero_diagonal(k):
    assert balanced_accuracy(ConfusionMatrix(np.eye(k, dtype=int) * 7)) == 1.0
    off = np.ones((k, k), dtype=int) - np.eye(k, dtype=int)
    assert balanced_accuracy(ConfusionMatrix(off)) == 0.0


def test_random_three_class_predictions_near_chance():
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1, 2], 300)
    pred = rng.integers(0, 3, size=labels.size)
    assert abs(balanced_accuracy(confusion_matrix(pred, labels, 3)) - 1 / 3) <= 0.05


def test_confusion_orientation():
    cm = confusion_matrix([1, 1, 0], [0, 1, 0], 2)
    assert cm.counts.tolist() == [[1, 1], [0, 1]]  # rows are true labels


def test_empty_class_is_an_error():
    with pytest.raises(ValueError, match="no test samples"):
        balanced_accuracy(ConfusionMatrix(np.array([[3, 1], [0, 0]])))
    with pytest.raises(ValueError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        confusion_matrix([0], [0, 1], 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60), st.integers(2, 4))
def test_duplication_invariance(pairs, reps):
    pred, lab = map(list, zip(*pairs))
    lab = lab + [0, 1, 2]
    pred = pred + [0, 0, 0]
    a = balanced_accuracy(confusion_matrix(pred, lab, 3))
    b = balanced_accuracy(confusion_matrix(pred * reps, lab * reps, 3))
    assert a == pytest.approx(b, abs=1e-12)


def test_balanced_set_overall_equals_balanced():
    rng = np.random.default_rng(1)
    labels = np.repeat([0, 1, 2], 50)
    pred = np.where(rng.uniform(size=labels.size) < 0.7, labels, rng.integers(0, 3, labels.size))
    cm = confusion_matrix(pred, labels, 3)
    assert overall_accuracy(cm) == pytest.approx(balanced_accuracy(cm), abs=1e-12)


def test_csv_roundtrips(tmp_path):
    rows = [{"method": "cdr", "task": "occupancy", "seed": 40, "accuracy": 0.9, "balanced_accuracy": 0.875}]
    write_metrics_csv(rows, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "method,task,seed,accuracy,balanced_accuracy"
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back == [{"method": "cdr", "task": "occupancy", "seed": 40, "accuracy": 0.9, "balanced_accuracy": 0.875}]
    cm = ConfusionMatrix(np.array([[4, 1, 0], [0, 5, 0], [2, 0, 3]]))
    write_confusion_csv(cm, tmp_path / "c.csv", ["empty", "one", "two"])
    assert read_confusion_csv(tmp_path / "c.csv") == cm
    plot_confusion({"cdr": cm}, tmp_path / "c.png", ["empty", "one", "two"])
    assert (tmp_path / "c.png").read_bytes()[:4] == b"\x89PNG"
