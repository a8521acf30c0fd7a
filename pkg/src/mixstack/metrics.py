"""Confusion matrices and macro-averaged precision / recall / F1."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C); rows gold, columns predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Scores:
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    per_class: dict[str, dict[str, float]]

    def as_dict(self) -> dict:
        flat = {
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "accuracy": self.accuracy,
        }
        for name, vals in self.per_class.items():
            for key, v in vals.items():
                flat[f"per_class.{name}.{key}"] = v
        return flat


def confusion(gold: Sequence[int], pred: Sequence[int], num_classes: int,
              class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError(f"gold has {gold.size} entries but pred has {pred.size}")
    for arr in (gold, pred):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"label index out of range for {num_classes} classes")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    names = list(class_names) if class_names is not None else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts, names)


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


def macro_scores(cm: ConfusionMatrix) -> Scores:
    """Zero-denominator ratios count as 0, and every class enters the macro mean."""
    if cm.total == 0:
        raise ValueError("cannot score an empty confusion matrix")
    c = cm.counts
    tp = np.diag(c).astype(float)
    predicted = c.sum(axis=0)
    actual = c.sum(axis=1)
    per_class = {}
    for k, name in enumerate(cm.class_names):
        p = _ratio(tp[k], predicted[k])
        r = _ratio(tp[k], actual[k])
        f = _ratio(2 * p * r, p + r)
        per_class[name] = {"precision": p, "recall": r, "f1": f, "support": int(actual[k])}
    return Scores(
        macro_precision=float(np.mean([v["precision"] for v in per_class.values()])),
        macro_recall=float(np.mean([v["recall"] for v in per_class.values()])),
        macro_f1=float(np.mean([v["f1"] for v in per_class.values()])),
        accuracy=float(tp.sum() / cm.total),
        per_class=per_class,
    )


def evaluate(gold, pred, class_names: Sequence[str]) -> Scores:
    return macro_scores(confusion(gold, pred, len(class_names), class_names))


def format_report(scores: Scores, title: str | None = None) -> str:
    """Flat ``key=value`` block, one entry per line."""
    lines = [f"# {title}"] if title else []
    lines += [f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in scores.as_dict().items()]
    return "\n".join(lines) + "\n"


def report_json(scores: Scores) -> str:
    return json.dumps(scores.as_dict(), indent=2, sort_keys=True) + "\n"
