"""Top-r symmetric eigenpairs via cyclic Jacobi sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class EigenResult:
    vectors: np.ndarray
    values: np.ndarray


def fix_signs(V):
    """Flip columns so the first entry of largest magnitude is positive."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def top_r_eigenvectors(S, r: int) -> EigenResult:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be a square matrix")
    m = S.shape[0]
    if not 1 <= r <= m:
        raise ValueError(f"r must lie in [1, {m}], got {r}")
    scale = max(1.0, float(np.linalg.norm(S)))
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("S is not symmetric")
    values, vectors = kernels.jacobi_eigh(0.5 * (S + S.T))
    order = np.argsort(-values, kind="stable")[:r]
    return EigenResult(vectors=fix_signs(vectors[:, order]), values=values[order])
