"""Ordinal and classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, TextIO

import numpy as np

from .errors import EmptyInput, LengthMismatch


def _check(truth, pred, K):
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"{truth.size} truths vs {pred.size} predictions")
    if truth.size and (truth.min() < 0 or truth.max() >= K or pred.min() < 0 or pred.max() >= K):
        raise ValueError(f"labels must lie in 0..{K - 1}")
    return truth, pred


def confusion_matrix(truth, pred, K: int) -> np.ndarray:
    """Counts with rows indexed by the true class and columns by the prediction."""
    truth, pred = _check(truth, pred, K)
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def _mae_from_confusion(cm: np.ndarray) -> tuple[float, np.ndarray]:
    K = cm.shape[0]
    dist = np.abs(np.arange(K)[:, None] - np.arange(K)[None, :])
    support = cm.sum(axis=1)
    per_class = np.full(K, np.nan)
    present = support > 0
    errors = (cm * dist).sum(axis=1)
    per_class[present] = errors[present] / support[present]
    # K integer ratios: exact rational average, rounded once
    terms = [Fraction(int(errors[c]), int(support[c])) for c in np.flatnonzero(present)]
    return float(sum(terms) / len(terms)), per_class


def mae_macro(truth, pred, K: int) -> float:
    """Macro-averaged mean absolute error over the classes present in ``truth``.

    Each true class contributes the mean ordinal distance of its
    predictions; classes with no true examples are left out of the average.
    """
    truth, pred = _check(truth, pred, K)
    if truth.size == 0:
        raise EmptyInput("mae_macro of an empty sample")
    return _mae_from_confusion(confusion_matrix(truth, pred, K))[0]


def micro_f1(truth, pred, K: int) -> float:
    """Micro-averaged F1. With one label per example every miss is one
    false positive and one false negative, so this reduces to accuracy."""
    truth, pred = _check(truth, pred, K)
    if truth.size == 0:
        raise EmptyInput("micro_f1 of an empty sample")
    return int(np.sum(truth == pred)) / truth.size


def _f1_per_class(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    out = np.zeros(len(tp))
    nz = denom > 0
    out[nz] = 2 * tp[nz] / denom[nz]
    return out


@dataclass
class ClassReport:
    support: int
    mae: float
    f1: float


@dataclass
class EvalReport:
    confusion: np.ndarray
    mae_macro: float
    micro_f1: float
    macro_f1: float
    per_class: list[ClassReport]
    n_examples: int
    class_names: tuple[str, ...] | None = None

    def to_text(self) -> str:
        lines = [
            f"n_examples: {self.n_examples}",
            f"mae_macro: {self.mae_macro:.6f}",
            f"micro_f1: {self.micro_f1:.6f}",
            f"macro_f1: {self.macro_f1:.6f}",
        ]
        return "\n".join(lines) + "\n"

    def per_class_table(self) -> str:
        names = self.class_names or tuple(str(i) for i in range(len(self.per_class)))
        rows = ["class\tsupport\tmae\tf1"]
        for name, pc in zip(names, self.per_class):
            mae = "nan" if np.isnan(pc.mae) else f"{pc.mae:.6f}"
            rows.append(f"{name}\t{pc.support}\t{mae}\t{pc.f1:.6f}")
        return "\n".join(rows) + "\n"

    def confusion_table(self) -> str:
        names = self.class_names or tuple(str(i) for i in range(len(self.per_class)))
        rows = ["true\\pred\t" + "\t".join(names)]
        for name, row in zip(names, self.confusion):
            rows.append(name + "\t" + "\t".join(str(int(v)) for v in row))
        return "\n".join(rows) + "\n"

    def as_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "mae_macro": self.mae_macro,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "per_class": [
                {"support": pc.support, "mae": None if np.isnan(pc.mae) else pc.mae, "f1": pc.f1}
                for pc in self.per_class
            ],
        }


def evaluate(truth, pred, K: int, class_names: Sequence[str] | None = None) -> EvalReport:
    cm = confusion_matrix(truth, pred, K)
    n = int(cm.sum())
    if n == 0:
        raise EmptyInput("cannot evaluate an empty sample")
    mae, per_class_mae = _mae_from_confusion(cm)
    f1 = _f1_per_class(cm)
    support = cm.sum(axis=1)
    tp = int(np.trace(cm))
    per_class = [ClassReport(int(support[c]), float(per_class_mae[c]), float(f1[c])) for c in range(K)]
    return EvalReport(
        confusion=cm,
        mae_macro=mae,
        micro_f1=tp / n,
        macro_f1=float(f1.mean()),
        per_class=per_class,
        n_examples=n,
        class_names=tuple(class_names) if class_names is not None else None,
    )


def write_fig2_rows(rows: Sequence[tuple[str, float]], stream: TextIO) -> None:
    """``system<TAB>micro_f1`` lines for external plotting."""
    for system, score in rows:
        stream.write(f"{system}\t{score:.6f}\n")
