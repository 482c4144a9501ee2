"""Label-structure penalties on the embedding projection U."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AuxLaplacian:
    q_aux: np.ndarray
    degree: np.ndarray


def build_transfer_q(seen_count: int, unseen_count: int) -> np.ndarray:
    """Block matrix rewarding seen/unseen similarity and unseen/unseen separation.

    Labels are ordered seen first. With a single unseen label the unseen block
    is the 1x1 zero since there are no unseen pairs to separate.
    """
    Ls, Lu = int(seen_count), int(unseen_count)
    if Ls < 1 or Lu < 1:
        raise ValueError(f"seen and unseen counts must be positive, got ({Ls}, {Lu})")
    L = Ls + Lu
    Q = np.zeros((L, L))
    cross = -1.0 / (2.0 * Ls * Lu)
    Q[:Ls, Ls:] = cross
    Q[Ls:, :Ls] = cross
    if Lu >= 2:
        Q[Ls:, Ls:] = (np.ones((Lu, Lu)) - np.eye(Lu)) / (Lu * (Lu - 1.0))
    return Q


def build_normalized_laplacian(R) -> AuxLaplacian:
    """``I - D^{-1/2} R D^{-1/2}`` with ``D = diag(R 1)``."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("similarity matrix must be square")
    if np.any(R < 0):
        raise ValueError("similarity matrix has negative entries")
    if not np.allclose(R, R.T, rtol=0, atol=1e-12):
        raise ValueError("similarity matrix is not symmetric")
    degree = R.sum(axis=1)
    isolated = np.flatnonzero(degree <= 0)
    if isolated.size:
        raise ValueError(f"isolated label in similarity graph: index {int(isolated[0])}")
    s = 1.0 / np.sqrt(degree)
    q = np.eye(R.shape[0]) - s[:, None] * R * s[None, :]
    q = 0.5 * (q + q.T)
    return AuxLaplacian(q_aux=q, degree=degree)


def label_structure(Q, q_aux, gamma: float, lam: float) -> np.ndarray:
    """Combined ``gamma*Q + lam*Q^A`` used by both the penalty and the U-step."""
    P = gamma * np.asarray(Q, dtype=float)
    if q_aux is not None and lam != 0:
        qa = q_aux.q_aux if isinstance(q_aux, AuxLaplacian) else np.asarray(q_aux)
        P = P + lam * qa
    return P


def eval_penalty(U, M, Q, q_aux=None, gamma=1.0, lam=0.0) -> float:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    Q = np.asarray(Q, dtype=float)
    if M.shape[1] != U.shape[0]:
        raise ValueError(f"M has {M.shape[1]} columns but U has {U.shape[0]} rows")
    if Q.shape != (M.shape[0], M.shape[0]):
        raise ValueError(f"Q shape {Q.shape} does not match {M.shape[0]} labels")
    P = M @ U
    total = 0.5 * gamma * float(np.sum(P * (Q @ P)))
    if q_aux is not None:
        qa = q_aux.q_aux if isinstance(q_aux, AuxLaplacian) else np.asarray(q_aux)
        if qa.shape != Q.shape:
            raise ValueError("auxiliary Laplacian shape does not match Q")
        total += 0.5 * lam * float(np.sum(P * (qa @ P)))
    return total
