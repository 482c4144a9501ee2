"""Multi-label evaluation: MiAP over rankings, F1 variants and Hamming loss
over binarized predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scoring import rank


@dataclass(frozen=True)
class EvalResult:
    miap: float
    micro_f1: float
    macro_f1: float
    hamming: float
    per_class_f1: np.ndarray = field(repr=False)
    skipped: int = 0
    counts: tuple = (0, 0, 0)  # pooled (TP, FP, FN)

    def as_dict(self):
        return {
            "miap": self.miap,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "hamming": self.hamming,
            "skipped": self.skipped,
        }


def average_precision(ranking, truth_row) -> float:
    """AP of one ranking (label indices, best first) against a 0/1 row."""
    hits = np.asarray(truth_row)[np.asarray(ranking)] > 0
    n_true = int(hits.sum())
    if n_true == 0:
        return float("nan")
    k = np.arange(1, hits.size + 1)
    return float(np.sum(np.cumsum(hits)[hits] / k[hits]) / n_true)


def miap(rankings, truth, return_skipped=False):
    """Mean per-instance AP; instances without true labels are skipped."""
    truth = np.atleast_2d(np.asarray(truth))
    aps = []
    skipped = 0
    for ranking, row in zip(rankings, truth):
        ap = average_precision(ranking, row)
        if np.isnan(ap):
            skipped += 1
        else:
            aps.append(ap)
    value = float(np.mean(aps)) if aps else 0.0
    return (value, skipped) if return_skipped else value


def miap_from_scores(scores, truth, return_skipped=False):
    return miap([rank(s) for s in np.atleast_2d(scores)], truth, return_skipped)


def _pair(pred, truth):
    pred = np.atleast_2d(np.asarray(pred)) > 0
    truth = np.atleast_2d(np.asarray(truth)) > 0
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, truth {truth.shape}")
    return pred, truth


def _f1(tp, fp, fn):
    den = 2 * tp + fp + fn
    return np.where(den > 0, 2 * tp / np.maximum(den, 1), 0.0)


def confusion(pred, truth):
    pred, truth = _pair(pred, truth)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    return tp, fp, fn


def micro_f1(pred, truth) -> float:
    tp, fp, fn = (int(c.sum()) for c in confusion(pred, truth))
    return float(_f1(tp, fp, fn))


def macro_f1(pred, truth):
    per_class = _f1(*confusion(pred, truth)).astype(float)
    return float(per_class.mean()) if per_class.size else 0.0, per_class


def hamming(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ValueError("cannot compute Hamming loss of empty matrices")
    return float(np.mean(pred != truth))


def evaluate(scores, pred, truth) -> EvalResult:
    value, skipped = miap_from_scores(scores, truth, return_skipped=True)
    macro, per_class = macro_f1(pred, truth)
    tp, fp, fn = (int(c.sum()) for c in confusion(pred, truth))
    return EvalResult(
        miap=value,
        micro_f1=micro_f1(pred, truth),
        macro_f1=macro,
        hamming=hamming(pred, truth),
        per_class_f1=per_class,
        skipped=skipped,
        counts=(tp, fp, fn),
    )
