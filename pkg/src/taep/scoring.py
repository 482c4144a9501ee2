"""Instance-label matching scores, calibrated threshold and rankings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelSpace, ModelParams

MODES = ("zeroshot", "generalized")


@dataclass(frozen=True)
class Prediction:
    labels: np.ndarray  # candidate label indices into the full label space
    scores: np.ndarray
    threshold: float
    ranking: np.ndarray  # candidate label indices, best first
    positives: np.ndarray


def score(model: ModelParams, x, M_cands) -> np.ndarray:
    """``(x W)(M_c U)'`` for every candidate row ``M_c``; ``x`` may be a batch."""
    x = np.asarray(x, dtype=float)
    M_cands = np.atleast_2d(np.asarray(M_cands, dtype=float))
    if x.shape[-1] != model.W.shape[0]:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match model ({model.W.shape[0]})")
    if M_cands.shape[1] != model.U.shape[0]:
        raise ValueError(f"embedding dimension {M_cands.shape[1]} does not match model ({model.U.shape[0]})")
    return (x @ model.W) @ (M_cands @ model.U).T


def threshold(model: ModelParams, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.W0.shape[0]:
        raise ValueError("feature dimension does not match model")
    out = x @ model.W0
    return float(out) if np.ndim(out) == 0 else out


def candidates(labels: LabelSpace, mode: str) -> np.ndarray:
    if mode == "zeroshot":
        return np.arange(labels.seen_count, labels.L)
    if mode == "generalized":
        return np.arange(labels.L)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def rank(scores) -> np.ndarray:
    """Descending order, ties broken by ascending position."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def predict(model: ModelParams, x, labels: LabelSpace, mode: str = "zeroshot") -> Prediction:
    cand = candidates(labels, mode)
    if cand.size == 0:
        raise ValueError("empty candidate label set")
    s = score(model, x, labels.embeddings[cand])
    t = threshold(model, x)
    return Prediction(
        labels=cand,
        scores=s,
        threshold=t,
        ranking=cand[rank(s)],
        positives=cand[s > t],
    )


def predict_batch(model: ModelParams, X, labels: LabelSpace, mode: str = "zeroshot"):
    """Scores, thresholds and binarized predictions for every row of ``X``."""
    cand = candidates(labels, mode)
    if cand.size == 0:
        raise ValueError("empty candidate label set")
    S = score(model, np.atleast_2d(X), labels.embeddings[cand])
    t = threshold(model, np.atleast_2d(X))
    return cand, S, t, (S > t[:, None]).astype(int)
