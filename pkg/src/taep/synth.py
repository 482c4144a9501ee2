"""Deterministic synthetic multi-label zero-shot tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, LabelSpace, normalize_rows

_STREAMS = ("prototypes", "blend", "map", "train_labels", "train_noise",
            "test_labels", "test_noise", "aux", "embed_noise", "clusters")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_train: int = 100
    n_test: int = 100
    L_seen: int = 6
    L_unseen: int = 4
    m: int = 12
    d: int = 20
    label_density: float = 0.3
    noise_scale: float = 0.1
    transfer_tightness: float = 0.9
    embedding_noise: float = 0.0
    blend_concentration: float = 1.0
    clusters: int = 0
    cluster_spread: float = 0.5

    def __post_init__(self):
        for name in ("n_train", "n_test", "L_seen", "m", "d"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.L_unseen < 2:
            raise ValueError("L_unseen must be at least 2")
        if not 0.0 < self.label_density < 1.0:
            raise ValueError("label_density must lie in (0, 1)")
        if self.noise_scale < 0 or self.embedding_noise < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.blend_concentration <= 0:
            raise ValueError("blend_concentration must be positive")
        if self.clusters < 0 or self.clusters > self.L_seen:
            raise ValueError("clusters must lie in [0, L_seen]")
        if self.cluster_spread < 0:
            raise ValueError("cluster_spread must be nonnegative")
        if not 0.0 <= self.transfer_tightness <= 1.0:
            raise ValueError("transfer_tightness must lie in [0, 1]")


@dataclass(frozen=True)
class SynthTask:
    train: Dataset
    test_features: np.ndarray
    test_truth: np.ndarray  # n_test x L, seen columns first
    labels: LabelSpace
    prototypes: np.ndarray  # clean label prototypes, L x m
    blend: np.ndarray  # L_unseen x L_seen convex weights
    feature_map: np.ndarray  # d x m


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(_STREAMS, children)}


def _label_rows(rng, n, L, density, active=None):
    """Independent inclusion per label, rejecting rows that are empty or full."""
    cols = L if active is None else active
    out = np.zeros((n, L), dtype=int)
    for i in range(n):
        while True:
            row = (rng.random(cols) < density).astype(int)
            if 0 < row.sum() < cols:
                break
        out[i, :cols] = row
    return out


def _features(rng, labels, prototypes, A, noise_scale):
    means = (labels @ prototypes) / labels.sum(axis=1, keepdims=True)
    X = means @ A.T
    if noise_scale > 0:
        X = X + noise_scale * rng.standard_normal(X.shape)
    return normalize_rows(X)


def generate(config: SynthConfig) -> SynthTask:
    """Seen prototypes are Gaussian; each unseen prototype is a convex blend of
    seen ones weighted by ``transfer_tightness`` plus a Gaussian remainder.
    Training instances carry seen labels only; test instances draw from all.

    With ``clusters = k > 0`` seen label ``j`` sits near centre ``j mod k``,
    so every family has members on both sides of the seen-class split."""
    c = config
    rng = _streams(c.seed)
    Ls, Lu = c.L_seen, c.L_unseen
    P_seen = rng["prototypes"].standard_normal((Ls, c.m)) / np.sqrt(c.m)
    if c.clusters > 0:
        centres = rng["clusters"].standard_normal((c.clusters, c.m)) / np.sqrt(c.m)
        P_seen = centres[np.arange(Ls) % c.clusters] + c.cluster_spread * P_seen
    remainder = rng["prototypes"].standard_normal((Lu, c.m)) / np.sqrt(c.m)
    blend = rng["blend"].dirichlet(np.full(Ls, c.blend_concentration), size=Lu)
    P_unseen = c.transfer_tightness * (blend @ P_seen) + (1.0 - c.transfer_tightness) * remainder
    P = np.vstack([P_seen, P_unseen])

    emb = P
    if c.embedding_noise > 0:
        emb = P + c.embedding_noise * rng["embed_noise"].standard_normal(P.shape) / np.sqrt(c.m)
    names = [f"seen{j}" for j in range(Ls)] + [f"unseen{j}" for j in range(Lu)]
    labels = LabelSpace(names=names, seen_count=Ls, embeddings=normalize_rows(emb), normalized=True)

    A = rng["map"].standard_normal((c.d, c.m)) / np.sqrt(c.m)

    Y_train = _label_rows(rng["train_labels"], c.n_train, Ls + Lu, c.label_density, active=Ls)
    X_train = _features(rng["train_noise"], Y_train, P, A, c.noise_scale)
    Y_test = _label_rows(rng["test_labels"], c.n_test, Ls + Lu, c.label_density)
    X_test = _features(rng["test_noise"], Y_test, P, A, c.noise_scale)

    return SynthTask(
        train=Dataset(X_train, Y_train[:, :Ls]),
        test_features=X_test,
        test_truth=Y_test,
        labels=labels,
        prototypes=P,
        blend=blend,
        feature_map=A,
    )


def prototype_similarity(task: SynthTask, noise: float = 0.0, seed: int = 0, neighbours: int = 0) -> np.ndarray:
    """Nonnegative similarity from the clean prototypes, optionally perturbed.

    Stands in for an auxiliary source (hierarchy, co-occurrence) that knows
    the true label relations better than the embeddings do. ``neighbours = 0``
    gives the dense map ``(1 + cos) / 2``. A positive count keeps, for each
    label, only its nearest labels by cosine (symmetrized, floored at 0.05),
    which is closer to the sparse graphs real sources produce.
    """
    if neighbours < 0:
        raise ValueError("neighbours must be nonnegative")
    Pn = normalize_rows(task.prototypes)
    C = Pn @ Pn.T
    if neighbours == 0:
        R = 0.5 * (1.0 + C)
    else:
        L = C.shape[0]
        R = np.zeros_like(C)
        k = min(neighbours, L - 1)
        for i in range(L):
            others = np.argsort(-C[i], kind="stable")
            others = others[others != i][:k]
            R[i, others] = np.maximum(C[i, others], 0.05)
        R = np.maximum(R, R.T)
    if noise > 0:
        rng = _streams(seed)["aux"]
        E = noise * rng.standard_normal(R.shape)
        R = R + 0.5 * (E + E.T)
    R = np.clip(R, 0.0, None)
    np.fill_diagonal(R, 1.0)
    return R
