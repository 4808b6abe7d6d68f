"""Confusion matrices, per-class precision/recall/F1 and top-k accuracy."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError

ZERO_DIVISION_NOTE = "* precision or recall with a zero denominator is reported as 0"


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[t, p]``: samples of true class ``t`` predicted as ``p``."""

    counts: np.ndarray
    labels: tuple

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ParameterError(f"confusion counts must be square, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            raise ParameterError("confusion counts must be integers")
        if (c < 0).any():
            raise ParameterError("confusion counts must be non-negative")
        if len(self.labels) != c.shape[0]:
            raise ParameterError("one label per class is required")
        object.__setattr__(self, "counts", c.astype(np.int64))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise ParameterError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.labels)


def _default_labels(k):
    return tuple(str(i + 1) for i in range(k))


def confusion(predicted, truth, num_classes: int, labels: Optional[Sequence[str]] = None) -> ConfusionMatrix:
    p = np.asarray(predicted, dtype=np.int64).ravel()
    t = np.asarray(truth, dtype=np.int64).ravel()
    if p.size != t.size:
        raise ParameterError(f"{p.size} predictions for {t.size} true labels")
    if num_classes < 1:
        raise ParameterError("num_classes must be >= 1")
    for name, v in (("predicted", p), ("truth", t)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ParameterError(f"{name} labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, labels if labels is not None else _default_labels(num_classes))


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def f1_score(precision, recall):
    """Harmonic mean, elementwise; 0 where both inputs are 0."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    return _ratio(2.0 * p * r, p + r)


@dataclass(frozen=True)
class ClassReport:
    labels: tuple
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    zero_division: bool = False  # some class hit a 0/0 and was reported as 0

    @property
    def total_support(self) -> int:
        return int(self.support.sum())

    def weighted(self) -> tuple:
        """Support-weighted (precision, recall, f1)."""
        w = self.support.astype(np.float64)
        if w.sum() == 0:
            return 0.0, 0.0, 0.0
        return tuple(float(np.dot(v, w) / w.sum()) for v in (self.precision, self.recall, self.f1))

    def macro(self) -> tuple:
        """Unweighted (precision, recall, f1) means over classes."""
        return tuple(float(v.mean()) for v in (self.precision, self.recall, self.f1))


def precision_recall_f1(cm: ConfusionMatrix) -> ClassReport:
    diag = np.diag(cm.counts)
    col = cm.counts.sum(axis=0)
    row = cm.counts.sum(axis=1)
    p = _ratio(diag, col)
    r = _ratio(diag, row)
    return ClassReport(cm.labels, p, r, f1_score(p, r), row.astype(np.int64),
                       bool((col == 0).any() or (row == 0).any()))


def report_from_rows(precision, recall, support, labels: Optional[Sequence[str]] = None,
                     f1=None) -> ClassReport:
    """Build a report from published per-class figures; F1 is recomputed
    unless given."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    s = np.asarray(support, dtype=np.int64)
    if not p.shape == r.shape == s.shape or p.ndim != 1:
        raise ParameterError("precision, recall and support must be equal-length vectors")
    f = f1_score(p, r) if f1 is None else np.asarray(f1, dtype=np.float64)
    return ClassReport(tuple(labels) if labels is not None else _default_labels(p.size), p, r, f, s)


def micro_average(cm: ConfusionMatrix) -> tuple:
    """Micro-averaged (precision, recall); both equal accuracy for single-label data."""
    tp = np.trace(cm.counts)
    return float(_ratio(tp, cm.counts.sum())), float(_ratio(tp, cm.counts.sum()))


def top_k_hits(probs, truth, k: int) -> np.ndarray:
    """Boolean per row: true label among the ``k`` largest scores.

    Ties go to the lower class index, the same rule as ``argmax``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    t = np.asarray(truth, dtype=np.int64).ravel()
    if probs.ndim != 2:
        raise ParameterError("probabilities must be an N x K matrix")
    n, kk = probs.shape
    if t.size != n:
        raise ParameterError(f"{n} probability rows for {t.size} labels")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k > kk:
        raise ParameterError(f"k = {k} exceeds the {kk} classes")
    if t.size and (t.min() < 0 or t.max() >= kk):
        raise ParameterError(f"labels must lie in [0, {kk})")
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return (order == t[:, None]).any(axis=1)


def top_k_accuracy(probs, truth, k: int) -> float:
    hits = top_k_hits(probs, truth, k)
    return float(hits.mean()) if hits.size else 0.0


def top_k_labels(probs_row, k: int) -> list:
    """``(index, probability)`` pairs for the ``k`` most likely classes."""
    row = np.asarray(probs_row, dtype=np.float64).ravel()
    if not 1 <= k <= row.size:
        raise ParameterError(f"k must lie in [1, {row.size}]")
    order = np.argsort(-row, kind="stable")[:k]
    return [(int(i), float(row[i])) for i in order]


_HEADER = ("Phoneme Number", "Precision", "Recall", "F1-score", "Support")


def format_report(report: ClassReport, macro: bool = True) -> str:
    """Fixed-width text table; two decimals; a final support-weighted
    ``Avg / Total`` row, optionally followed by the unweighted means."""
    width = max([len(_HEADER[0]), len("Avg / Total"), len("Macro avg")] + [len(lab) for lab in report.labels])
    lines = [f"{_HEADER[0]:<{width}}  {_HEADER[1]:>9}  {_HEADER[2]:>9}  {_HEADER[3]:>9}  {_HEADER[4]:>9}"]

    def row(name, p, r, f, s):
        lines.append(f"{name:<{width}}  {p:>9.2f}  {r:>9.2f}  {f:>9.2f}  {s:>9}")

    for i, lab in enumerate(report.labels):
        row(lab, report.precision[i], report.recall[i], report.f1[i], int(report.support[i]))
    lines.append("")
    row("Avg / Total", *report.weighted(), report.total_support)
    if macro:
        row("Macro avg", *report.macro(), report.total_support)
    if report.zero_division:
        lines.append(ZERO_DIVISION_NOTE)
    return "\n".join(lines) + "\n"


def report_csv(report: ClassReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "precision", "recall", "f1", "support"])
    for i, lab in enumerate(report.labels):
        w.writerow([lab, f"{report.precision[i]:.6f}", f"{report.recall[i]:.6f}", f"{report.f1[i]:.6f}",
                    int(report.support[i])])
    p, r, f = report.weighted()
    w.writerow(["avg_total", f"{p:.6f}", f"{r:.6f}", f"{f:.6f}", report.total_support])
    p, r, f = report.macro()
    w.writerow(["macro_avg", f"{p:.6f}", f"{r:.6f}", f"{f:.6f}", report.total_support])
    return buf.getvalue()
