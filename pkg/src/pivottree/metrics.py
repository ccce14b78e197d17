"""Confusion-matrix based evaluation: balanced accuracy and macro P/R/F1."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.intp).ravel()
    y_pred = np.asarray(y_pred, dtype=np.intp).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted labels")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} label out of range for {n_classes} classes")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _mean(values) -> float:
    values = [float(v) for v in values]
    return sum(values) / len(values)


def _per_class(cm: np.ndarray):
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if cm.sum() == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(cm).astype(np.float64)
    true_counts = cm.sum(axis=1)
    pred_counts = cm.sum(axis=0)
    present = true_counts > 0
    precision = np.divide(diag, pred_counts, out=np.zeros_like(diag), where=pred_counts > 0)
    recall = np.divide(diag, true_counts, out=np.zeros_like(diag), where=true_counts > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    return precision, recall, f1, present


def macro_scores(cm):
    """``(macro_precision, macro_recall, macro_f1, per_class)``.

    Per-class scores with a zero denominator count as 0. Macro averages run
    over the classes that occur in the ground truth.
    """
    precision, recall, f1, present = _per_class(cm)
    per_class = [(float(p), float(r), float(f)) for p, r, f in zip(precision, recall, f1)]
    return (_mean(precision[present]), _mean(recall[present]), _mean(f1[present]), per_class)


def balanced_accuracy(cm) -> float:
    return macro_scores(cm)[1]


@dataclass(frozen=True)
class EvaluationReport:
    confusion: np.ndarray
    balanced_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list
    class_names: Optional[tuple] = None

    @property
    def names(self) -> list:
        n = self.confusion.shape[0]
        return list(self.class_names) if self.class_names else [str(i) for i in range(n)]

    def to_text(self) -> str:
        names = self.names
        width = max([len(s) for s in names] + [8])
        support = self.confusion.sum(axis=1)
        rows = [f"{'class':<{width}}  precision  recall     f1  support"]
        for name, (p, r, f), s in zip(names, self.per_class, support):
            rows.append(f"{name:<{width}}  {p:9.4f}  {r:6.4f}  {f:5.4f}  {s:7d}")
        rows.append(f"{'macro':<{width}}  {self.macro_precision:9.4f}  {self.macro_recall:6.4f}  "
                    f"{self.macro_f1:5.4f}  {int(support.sum()):7d}")
        rows.append(f"balanced accuracy: {self.balanced_accuracy:.4f}")
        rows.append("confusion (rows=true, cols=predicted):")
        for name, row in zip(names, self.confusion):
            rows.append(f"  {name:<{width}} " + " ".join(f"{v:5d}" for v in row))
        return "\n".join(rows) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = self.names
        w.writerow(["class", "precision", "recall", "f1", "support"] + [f"pred:{n}" for n in names])
        for name, (p, r, f), row in zip(names, self.per_class, self.confusion):
            w.writerow([name, repr(p), repr(r), repr(f), int(row.sum())] + [int(v) for v in row])
        w.writerow(["macro", repr(self.macro_precision), repr(self.macro_recall), repr(self.macro_f1),
                    int(self.confusion.sum())])
        w.writerow(["balanced_accuracy", repr(self.balanced_accuracy)])
        return buf.getvalue()


def evaluate(y_true, y_pred, n_classes: int, class_names: Sequence[str] = None) -> EvaluationReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    p, r, f, per_class = macro_scores(cm)
    return EvaluationReport(cm, r, p, r, f, per_class, tuple(class_names) if class_names else None)
