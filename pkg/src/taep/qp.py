"""Per-instance quadratic subproblem of the dual coordinate step."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_MAX_ITER = 10_000
ORACLE_MAX_LABELS = 6
ORACLE_RIDGE = 1e-10
ORACLE_FEAS_TOL = 1e-9


class QPConvergenceError(RuntimeError):
    """The row solver hit its iteration cap; carries the best feasible iterate."""

    def __init__(self, z, residual, instance_index=None):
        self.z = z
        self.residual = residual
        self.instance_index = instance_index
        where = "" if instance_index is None else f" (instance {instance_index})"
        super().__init__(f"row QP did not converge{where}: KKT residual {residual:.3e}")


@dataclass(frozen=True)
class RowQP:
    H: np.ndarray
    f: np.ndarray
    positive_mask: np.ndarray
    instance_index: int = -1

    def objective(self, z) -> float:
        return kernels.qp_objective(self.H, self.f, np.asarray(z, dtype=float))

    def residual(self, z) -> float:
        return kernels.kkt_residual(self.H, self.f, np.asarray(z, dtype=float), self.pos)

    @property
    def pos(self):
        return np.asarray(self.positive_mask, dtype=bool)


def label_kernel(M_s, U) -> np.ndarray:
    """``M^s U U' M^s' + 11'``, symmetrized."""
    P = np.asarray(M_s, dtype=float) @ np.asarray(U, dtype=float)
    K = P @ P.T + 1.0
    return 0.5 * (K + K.T)


def assemble_row_qp(i, X, Y, Psi, U, M_s, beta) -> RowQP:
    """Build the row-``i`` subproblem with row ``i`` of ``Psi`` treated as zero."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    if Psi.shape != Y.shape or X.shape[0] != Y.shape[0]:
        raise ValueError("X, Y and Psi must agree on instance and label counts")
    K = label_kernel(M_s, U)
    if K.shape[0] != Y.shape[1]:
        raise ValueError("seen embeddings do not match label columns")
    x = X[i]
    rest = Psi.copy()
    rest[i] = 0.0
    H = (float(x @ x) / beta) * K
    f = 1.0 - 2.0 * Y[i] + K @ (rest.T @ (X @ x)) / beta
    return RowQP(H=H, f=f, positive_mask=Y[i] > 0.5, instance_index=int(i))


def solve_row_qp(qp: RowQP, tolerance: float = 1e-10, max_iter: int = DEFAULT_MAX_ITER):
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    z, res, _ = kernels.solve_row_qp(qp.H, qp.f, qp.pos, tolerance, max_iter)
    if res > tolerance:
        raise QPConvergenceError(z, res, qp.instance_index)
    return z


def is_feasible(z, pos) -> bool:
    """Exact check: sign pattern and both caps, no tolerance."""
    z = np.asarray(z, dtype=float)
    pos = np.asarray(pos, dtype=bool)
    if np.any(z[pos] < 0) or np.any(z[~pos] > 0):
        return False
    return all(
        s <= 1.0
        for s in (math.fsum(z[pos]), math.fsum(-z[~pos]), np.sum(z[pos]), np.sum(-z[~pos]))
    )


def oracle_solve_row_qp(qp: RowQP) -> np.ndarray:
    """Exact minimizer by enumerating every active set (test oracle, L^s <= 6)."""
    H = np.asarray(qp.H, dtype=float)
    f = np.asarray(qp.f, dtype=float)
    pos = qp.pos
    k = f.shape[0]
    if k > ORACLE_MAX_LABELS:
        raise ValueError(f"oracle refuses {k} labels (limit {ORACLE_MAX_LABELS})")
    # constraint rows a'z = b when active: bounds z_c = 0, then the two caps
    rows = [np.eye(k)[c] for c in range(k)]
    rhs = [0.0] * k
    rows.append(pos.astype(float))
    rhs.append(1.0)
    rows.append(-(~pos).astype(float))
    rhs.append(1.0)
    rows = np.array(rows)
    rhs = np.array(rhs)
    Hr = H + ORACLE_RIDGE * np.eye(k)

    best, best_val = np.zeros(k), 0.0
    for size in range(len(rows) + 1):
        for active in itertools.combinations(range(len(rows)), size):
            A = rows[list(active)]
            a = A.shape[0]
            KKT = np.zeros((k + a, k + a))
            KKT[:k, :k] = Hr
            KKT[:k, k:] = A.T
            KKT[k:, :k] = A
            b = np.concatenate([-f, rhs[list(active)]])
            try:
                sol = np.linalg.solve(KKT, b)
            except np.linalg.LinAlgError:
                continue
            z = sol[:k]
            if not _oracle_feasible(z, pos):
                continue
            val = 0.5 * z @ H @ z + f @ z
            if val < best_val:
                best, best_val = z, val
    return best


def _oracle_feasible(z, pos):
    t = ORACLE_FEAS_TOL
    return (
        np.all(z[pos] >= -t)
        and np.all(z[~pos] <= t)
        and z[pos].sum() <= 1 + t
        and -z[~pos].sum() <= 1 + t
    )
