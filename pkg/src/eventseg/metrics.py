"""Timestep-level confusion counts and F1 reports.

Every 0/0 ratio (precision, recall or F1 of a class that is never predicted
or never present) is reported as 0, and such classes still count toward the
unweighted macro mean.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K), rows = truth, cols = prediction

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def update(self, truth, pred) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=np.int64).ravel()
        pred = np.asarray(pred, dtype=np.int64).ravel()
        if truth.shape != pred.shape:
            raise LengthMismatch(f"truth has {truth.size} timesteps, prediction {pred.size}")
        K = self.num_classes
        self.counts += np.bincount(truth * K + pred, minlength=K * K).reshape(K, K)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(truths, preds, num_classes: int) -> ConfusionMatrix:
    """Accumulate over paired sequences (or two single sequences)."""
    cm = ConfusionMatrix.zeros(num_classes)
    truths, preds = list(truths), list(preds)
    if len(truths) != len(preds):
        raise LengthMismatch(f"{len(truths)} truth windows vs {len(preds)} predicted windows")
    if truths and np.ndim(truths[0]) == 0:
        truths, preds = [truths], [preds]
    for t, p in zip(truths, preds):
        cm.update(t, p)
    return cm


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def f1_report(cm: ConfusionMatrix, class_names=None) -> dict:
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    precision = _ratio(tp, c.sum(axis=0))
    recall = _ratio(tp, c.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    names = class_names or [str(k) for k in range(cm.num_classes)]
    per_class = {
        name: {"precision": float(precision[k]), "recall": float(recall[k]), "f1": float(f1[k])}
        for k, name in enumerate(names)
    }
    return {
        "per_class": per_class,
        "macro_f1": float(f1.mean()),
        "support": {name: int(cm.counts[k].sum()) for k, name in enumerate(names)},
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
