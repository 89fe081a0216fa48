"""Multi-label metrics: one-error, hamming loss, macro/micro F1."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DataError


def to_indicator(label_sets, n_labels: int) -> np.ndarray:
    """Indicator matrix from sets of label indices (an indicator matrix passes through)."""
    if isinstance(label_sets, np.ndarray) and label_sets.ndim == 2:
        if label_sets.shape[1] != n_labels:
            raise DataError(f"indicator matrix has {label_sets.shape[1]} columns, expected {n_labels}")
        return (label_sets != 0).astype(np.int64)
    out = np.zeros((len(label_sets), n_labels), dtype=np.int64)
    for i, labels in enumerate(label_sets):
        for c in labels:
            if not 0 <= c < n_labels:
                raise DataError(f"label index {c} out of range for {n_labels} labels")
            out[i, c] = 1
    return out


def one_error(scores, gold) -> float:
    """Fraction of samples whose top-scored label is not gold (ties -> lowest index)."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    Y = to_indicator(gold, scores.shape[1])
    if len(Y) == 0:
        return 0.0
    if np.any(Y.sum(axis=1) == 0):
        raise DataError("one_error: every sample needs at least one gold label")
    top = np.argmax(scores, axis=1)
    return float(np.mean(Y[np.arange(len(Y)), top] == 0))


def hamming_loss(pred, gold, n_labels: int) -> float:
    P, Y = to_indicator(pred, n_labels), to_indicator(gold, n_labels)
    if P.size == 0:
        return 0.0
    return float(np.sum(P != Y)) / (P.shape[0] * n_labels)


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return precision, recall, f1


def f1_scores(pred, gold, n_labels: int):
    """(macro F1, micro F1, per-label dict of arrays).

    0/0 ratios count as 0; macro averages over all ``n_labels`` labels.
    """
    P, Y = to_indicator(pred, n_labels), to_indicator(gold, n_labels)
    tp = np.sum((P == 1) & (Y == 1), axis=0)
    fp = np.sum((P == 1) & (Y == 0), axis=0)
    fn = np.sum((P == 0) & (Y == 1), axis=0)
    precision, recall, f1 = _f1(tp, fp, fn)
    _, _, micro = _f1(tp.sum(), fp.sum(), fn.sum())
    per_label = {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": Y.sum(axis=0),
    }
    macro = float(f1.mean()) if n_labels else 0.0
    return macro, float(micro), per_label


@dataclass
class EvalReport:
    one_error: float
    hamming_loss: float
    macro_f1: float
    micro_f1: float
    per_label: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **extra):
        payload = self.to_dict()
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=False)

    def table(self, precision=4):
        head = f"{'OE':>10} {'HL':>10} {'Macro F1':>10} {'Micro F1':>10}"
        row = " ".join(
            f"{v:>10.{precision}f}"
            for v in (self.one_error, self.hamming_loss, self.macro_f1, self.micro_f1)
        )
        return f"{head}\n{row}"


def evaluate(scores, pred, gold, styles) -> EvalReport:
    n = len(styles)
    macro, micro, per = f1_scores(pred, gold, n)
    per_label = {
        s: {
            "precision": float(per["precision"][i]),
            "recall": float(per["recall"][i]),
            "f1": float(per["f1"][i]),
            "support": int(per["support"][i]),
        }
        for i, s in enumerate(styles)
    }
    return EvalReport(
        one_error=one_error(scores, gold),
        hamming_loss=hamming_loss(pred, gold, n),
        macro_f1=macro,
        micro_f1=micro,
        per_label=per_label,
    )
