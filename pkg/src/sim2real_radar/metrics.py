"""Confusion matrices and accuracy summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], n_classes: int) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(labels, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise ValueError(f"{len(pred)} predictions vs {len(true)} labels")
    for name, v in (("prediction", pred), ("label", true)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Macro-averaged recall. A class missing from the test set is an error."""
    rows = cm.counts.sum(axis=1)
    if np.any(rows == 0):
        missing = np.flatnonzero(rows == 0).tolist()
        raise ValueError(f"classes {missing} have no test samples")
    return float(np.mean(np.diag(cm.counts) / rows))


def overall_accuracy(cm: ConfusionMatrix) -> float:
    total = cm.counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / total)


METRIC_FIELDS = ["method", "task", "seed", "accuracy", "balanced_accuracy"]


def write_metrics_csv(rows: list[dict], path: str | Path) -> None:
    """One row per (method, task, seed); floats written with fixed precision."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({
                **{k: r.get(k, "") for k in METRIC_FIELDS},
                "accuracy": f"{r['accuracy']:.6f}",
                "balanced_accuracy": f"{r['balanced_accuracy']:.6f}",
            })


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"] = int(r["seed"]) if r.get("seed") not in (None, "") else r.get("seed")
        r["accuracy"] = float(r["accuracy"])
        r["balanced_accuracy"] = float(r["balanced_accuracy"])
    return rows


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path, class_names: Sequence[str] | None = None) -> None:
    names = list(class_names) if class_names else [str(k) for k in range(cm.n_classes)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, cm.counts):
            w.writerow([name, *row.tolist()])


def read_confusion_csv(path: str | Path) -> ConfusionMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return ConfusionMatrix(np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int64))


def plot_confusion(cms: dict[str, ConfusionMatrix], path: str | Path, class_names: Sequence[str] | None = None) -> None:
    """Side-by-side heatmaps, one per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(cms), figsize=(3.2 * len(cms), 3.0), squeeze=False)
    for ax, (title, cm) in zip(axes[0], cms.items()):
        k = cm.n_classes
        names = class_names or [str(i) for i in range(k)]
        ax.imshow(cm.counts, cmap="Blues")
        for i in range(k):
            for j in range(k):
                ax.text(j, i, int(cm.counts[i, j]), ha="center", va="center")
        ax.set_xticks(range(k), names, rotation=30)
        ax.set_yticks(range(k), names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(f"{title}\nbal. acc {balanced_accuracy(cm):.2f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
