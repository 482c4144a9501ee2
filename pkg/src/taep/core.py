"""Data containers shared by the solver, scorer and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-8
UNIT_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when training data breaks an invariant the solver relies on."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Instance features ``X`` (n x d) and seen-label indicators ``Y`` (n x L^s)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        Y = np.atleast_2d(np.asarray(self.labels))
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(Y, dtype=float))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label names with their word embeddings; seen labels come first."""

    names: tuple
    seen_count: int
    embeddings: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        object.__setattr__(self, "seen_count", int(self.seen_count))
        M = np.atleast_2d(np.asarray(self.embeddings, dtype=float))
        object.__setattr__(self, "embeddings", _frozen(M))

    @property
    def L(self) -> int:
        return len(self.names)

    @property
    def unseen_count(self) -> int:
        return self.L - self.seen_count

    @property
    def m(self) -> int:
        return self.embeddings.shape[1]

    @property
    def seen(self) -> np.ndarray:
        return self.embeddings[: self.seen_count]

    @property
    def unseen(self) -> np.ndarray:
        return self.embeddings[self.seen_count :]

    @property
    def seen_names(self):
        return self.names[: self.seen_count]

    @property
    def unseen_names(self):
        return self.names[self.seen_count :]

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class ModelParams:
    """Learned projections plus the hyperparameters that produced them."""

    W: np.ndarray
    W0: np.ndarray
    U: np.ndarray
    beta: float
    gamma: float
    lam: float
    r: int
    label_names: tuple = field(default=())
    seen_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(np.atleast_2d(self.W)))
        object.__setattr__(self, "W0", _frozen(np.ravel(self.W0)))
        object.__setattr__(self, "U", _frozen(np.atleast_2d(self.U)))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "r", int(self.r))

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    def orthonormality_error(self) -> float:
        G = self.U.T @ self.U
        return float(np.linalg.norm(G - np.eye(G.shape[0])))

    def check(self):
        """Return a list of invariant violations (empty when consistent)."""
        problems = []
        if self.W.shape[1] != self.r or self.U.shape[1] != self.r:
            problems.append("projection rank does not match r")
        if self.W0.shape[0] != self.W.shape[0]:
            problems.append("W0 length does not match feature dimension")
        if self.r > self.U.shape[0]:
            problems.append("r exceeds embedding dimension")
        if self.orthonormality_error() > ORTHO_TOL:
            problems.append("U columns are not orthonormal")
        for name, v in (("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lam)):
            if v < 0:
                problems.append(f"{name} is negative")
        return problems


def normalize_rows(matrix):
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape[1] < 1:
        raise ValueError("matrix must have at least one column")
    norms = np.linalg.norm(A, axis=1)
    out = A.copy()
    nz = norms > 0
    out[nz] = A[nz] / norms[nz, None]
    return out


def validate(dataset: Dataset, labels: LabelSpace):
    """Collect invariant violations for a training set and its label space.

    Violations are returned as strings, never raised. Zero embedding rows are
    reported with a ``warning:`` prefix since training tolerates them.
    """
    report = []
    X, Y = dataset.features, dataset.labels
    if X.shape[0] < 1:
        report.append("dataset has no instances")
    if X.shape[0] != Y.shape[0]:
        report.append(f"row count mismatch: features {X.shape[0]}, labels {Y.shape[0]}")
    if not np.all(np.isfinite(X)):
        report.append("features contain non-finite values")
    if not np.all((Y == 0) | (Y == 1)):
        report.append("labels contain values other than 0 and 1")
    else:
        for i in np.flatnonzero(Y.sum(axis=1) == 0):
            report.append(f"instance with empty positive set (row {i})")
        for i in np.flatnonzero(Y.sum(axis=1) == Y.shape[1]):
            report.append(f"instance with empty negative set (row {i})")
    if labels.seen_count != Y.shape[1]:
        report.append(
            f"seen count mismatch: labels declare {labels.seen_count}, Y has {Y.shape[1]} columns"
        )
    if labels.seen_count < 1 or labels.seen_count > labels.L:
        report.append("seen count out of range")
    if len(set(labels.names)) != len(labels.names):
        report.append("label names are not unique")
    if labels.embeddings.shape[0] != labels.L:
        report.append(
            f"embedding rows ({labels.embeddings.shape[0]}) do not match label count ({labels.L})"
        )
    else:
        norms = np.linalg.norm(labels.embeddings, axis=1)
        for c in np.flatnonzero(norms == 0):
            report.append(f"warning: zero embedding row for label {labels.names[c]!r}")
        if labels.normalized:
            bad = np.flatnonzero((norms > 0) & (np.abs(norms - 1.0) > UNIT_TOL))
            for c in bad:
                report.append(f"embedding row for {labels.names[c]!r} is not unit norm")
    if not np.all(np.isfinite(labels.embeddings)):
        report.append("embeddings contain non-finite values")
    return report


def errors_only(report):
    return [v for v in report if not v.startswith("warning:")]
