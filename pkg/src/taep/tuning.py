"""Hyperparameter selection on a split of the seen classes, evaluation
helpers, and the regularization-strength sweep."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, LabelSpace
from .metrics import EvalResult, evaluate
from .scoring import candidates, predict_batch
from .trainer import ConfigError, TrainConfig, train

BETA_GRID = tuple(float(b) for b in range(1, 11))
STRENGTH_GRID = (0.01, 0.1, 1.0, 10.0)
SWEEP_FACTORS = (1.0, 0.1, 0.01, 0.001)
METRICS = ("miap", "micro_f1", "macro_f1", "hamming")


@dataclass(frozen=True)
class GridPoint:
    beta: float
    gamma: float
    lam: float

    def key(self):
        return (self.beta, self.gamma, self.lam)


@dataclass(frozen=True)
class TuneResult:
    selected: GridPoint
    scores: tuple  # (GridPoint, score) in grid order
    model: object
    trace: list


def make_grid(betas=BETA_GRID, gammas=STRENGTH_GRID, lams=(0.0,)):
    return [GridPoint(float(b), float(g), float(l)) for b, g, l in itertools.product(betas, gammas, lams)]


def metric_value(result: EvalResult, metric: str) -> float:
    """Higher is better for every metric; Hamming loss is negated."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    v = getattr(result, metric)
    return -v if metric == "hamming" else v


def restrict_truth(truth, labels: LabelSpace, mode, n_instances):
    """Truth columns for the candidates of ``mode``.

    ``truth`` may already be restricted to the candidates or cover all labels.
    """
    truth = np.atleast_2d(np.asarray(truth))
    cand = candidates(labels, mode)
    if truth.shape[1] == labels.L and cand.size != labels.L:
        truth = truth[:, cand]
    if truth.shape != (n_instances, cand.size):
        raise ValueError(
            f"truth shape {truth.shape} does not match {n_instances} instances "
            f"x {cand.size} candidate labels ({mode})"
        )
    return truth


def evaluate_model(model, X, truth, labels: LabelSpace, mode="zeroshot") -> EvalResult:
    X = np.atleast_2d(X)
    truth = restrict_truth(truth, labels, mode, X.shape[0])
    _, S, _, B = predict_batch(model, X, labels, mode)
    return evaluate(S, B, truth)


def split_seen(labels: LabelSpace):
    """First ceil(L^s/2) seen labels train, the rest validate."""
    Ls = labels.seen_count
    if Ls < 2:
        raise ConfigError("need at least two seen labels to split")
    n_a = (Ls + 1) // 2
    return np.arange(n_a), np.arange(n_a, Ls)


def split_problem(dataset: Dataset, labels: LabelSpace, R=None, val_fraction=0.0, seed=0):
    """Build the proxy zero-shot task: half A plays seen, half B plays unseen.

    Instances whose A-labels are all 0 or all 1 cannot be trained on and are
    dropped from the training side. With ``val_fraction > 0`` a seeded
    fraction of instances is held out for validation; otherwise validation
    reuses the training instances, whose B labels the model never sees.
    """
    a, b = split_seen(labels)
    Y = dataset.labels
    n = dataset.n
    if val_fraction > 0:
        perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
        n_val = max(1, int(round(val_fraction * n)))
        val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    else:
        tr_idx = val_idx = np.arange(n)
    Ya = Y[tr_idx][:, a]
    keep = tr_idx[(Ya.sum(axis=1) > 0) & (Ya.sum(axis=1) < a.size)]
    if keep.size == 0:
        raise ConfigError("no training instance has both positive and negative labels in the split")
    order = np.concatenate([a, b])
    split_labels = LabelSpace(
        names=[labels.names[i] for i in order],
        seen_count=a.size,
        embeddings=labels.embeddings[order],
        normalized=labels.normalized,
    )
    train_ds = Dataset(dataset.features[keep], Y[keep][:, a])
    R_split = None if R is None else np.asarray(R)[np.ix_(order, order)]
    return train_ds, split_labels, R_split, dataset.features[val_idx], Y[val_idx][:, b]


def tune(
    dataset: Dataset,
    labels: LabelSpace,
    R=None,
    base: TrainConfig = TrainConfig(),
    grid=None,
    metric="miap",
    seed=0,
    val_fraction=0.0,
):
    """Grid search on the seen-class split, then retrain on all seen classes."""
    if grid is None:
        grid = make_grid(lams=STRENGTH_GRID if R is not None else (0.0,))
    grid = list(grid)
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    tr, split_labels, R_split, Xv, Tv = split_problem(dataset, labels, R, val_fraction, seed)
    scores = []
    for point in grid:
        cfg = replace(base, beta=point.beta, gamma=point.gamma, lam=point.lam)
        model, _, _ = train(tr, split_labels, R_split if point.lam > 0 else None, cfg)
        result = evaluate_model(model, Xv, Tv, split_labels, "zeroshot")
        scores.append((point, metric_value(result, metric)))
    # best score; ties go to the lexicographically smallest (beta, gamma, lambda)
    best = min(scores, key=lambda ps: (-ps[1], ps[0].key()))[0]
    cfg = replace(base, beta=best.beta, gamma=best.gamma, lam=best.lam)
    model, _, trace = train(dataset, labels, R if best.lam > 0 else None, cfg)
    return TuneResult(selected=best, scores=tuple(scores), model=model, trace=trace)


@dataclass(frozen=True)
class SweepRow:
    factor: float
    value: float
    result: EvalResult


def sweep(
    dataset: Dataset,
    labels: LabelSpace,
    X_eval,
    truth_eval,
    R=None,
    base: TrainConfig = TrainConfig(),
    param="gamma",
    mode="zeroshot",
    factors=SWEEP_FACTORS,
):
    """Retrain with ``param`` scaled by each factor and evaluate each model."""
    if param not in ("gamma", "lambda"):
        raise ConfigError(f"unknown sweep parameter {param!r}")
    attr = "gamma" if param == "gamma" else "lam"
    base_value = getattr(base, attr)
    if base_value <= 0:
        raise ConfigError(f"cannot sweep {param}: base value must be positive (got {base_value})")
    if param == "lambda" and R is None:
        raise ConfigError("lambda sweep requires an auxiliary similarity matrix")
    rows = []
    for factor in factors:
        cfg = replace(base, **{attr: base_value * factor})
        model, _, _ = train(dataset, labels, R if cfg.lam > 0 else None, cfg)
        rows.append(SweepRow(factor, base_value * factor, evaluate_model(model, X_eval, truth_eval, labels, mode)))
    return rows


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties; 0 if either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    rx, ry = _avg_ranks(x), _avg_ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])


def _avg_ranks(v):
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    ranks[order] = np.arange(v.size, dtype=float)
    for value in np.unique(v):
        tied = v == value
        ranks[tied] = ranks[tied].mean()
    return ranks


def sweep_svg(rows, title="MiAP vs scaling factor", width=420, height=300) -> str:
    """Minimal standalone SVG line plot of MiAP (percent) against log10(factor)."""
    xs = [np.log10(r.factor) for r in rows]
    ys = [100.0 * r.result.miap for r in rows]
    pad = 45
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0

    def px(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>',
    ]
    for x, y, r in zip(xs, ys, rows):
        parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="steelblue"/>')
        parts.append(
            f'<text x="{px(x):.1f}" y="{height - pad + 16}" text-anchor="middle" font-size="11">{r.factor:g}</text>'
        )
        parts.append(
            f'<text x="{px(x):.1f}" y="{py(y) - 8:.1f}" text-anchor="middle" font-size="10">{y:.2f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
