"""Alternating dual solver: Gauss-Seidel passes over the dual rows, then a
closed-form eigenvector update of the label projection U."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .core import Dataset, LabelSpace, ModelParams, ValidationError, errors_only, validate
from .eigen import top_r_eigenvectors
from .qp import DEFAULT_MAX_ITER, QPConvergenceError, assemble_row_qp, label_kernel, solve_row_qp
from .regularizers import (
    AuxLaplacian,
    build_normalized_laplacian,
    build_transfer_q,
    eval_penalty,
    label_structure,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    gamma: float = 0.0
    lam: float = 0.0
    r: int = 1
    max_outer_iterations: int = 50
    passes_per_outer: int = 1
    dual_tolerance: float = 1e-6
    qp_tolerance: float = 1e-9
    qp_max_iter: int = DEFAULT_MAX_ITER
    final_passes: int = 50
    seed: int = 0
    return_best: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.gamma < 0 or self.lam < 0:
            raise ConfigError("gamma and lambda must be nonnegative")
        if self.r < 1:
            raise ConfigError("r must be a positive integer")
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be at least 1")
        if self.passes_per_outer < 1:
            raise ConfigError("passes_per_outer must be at least 1")
        if self.final_passes < 0:
            raise ConfigError("final_passes must be nonnegative")


@dataclass(frozen=True)
class Problem:
    """Everything the solver reads but never modifies."""

    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    seen_count: int
    Q: np.ndarray
    q_aux: Optional[AuxLaplacian] = None

    @property
    def M_s(self):
        return self.M[: self.seen_count]

    @classmethod
    def build(cls, dataset: Dataset, labels: LabelSpace, R=None):
        Q = build_transfer_q(labels.seen_count, labels.unseen_count)
        q_aux = None if R is None else build_normalized_laplacian(R)
        return cls(
            X=np.ascontiguousarray(dataset.features, dtype=float),
            Y=np.ascontiguousarray(dataset.labels, dtype=float),
            M=np.asarray(labels.embeddings, dtype=float),
            seen_count=labels.seen_count,
            Q=Q,
            q_aux=q_aux,
        )


@dataclass
class DualState:
    psi: np.ndarray
    u: np.ndarray
    outer_iteration: int = 0
    dual_history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n, seen_count, m, r):
        return cls(psi=np.zeros((n, seen_count)), u=np.zeros((m, r)))

    def snapshot(self) -> "DualState":
        psi = self.psi.copy()
        u = self.u.copy()
        psi.setflags(write=False)
        u.setflags(write=False)
        return DualState(psi, u, self.outer_iteration, list(self.dual_history))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    dual: float
    primal: float
    psi_norm: float
    elapsed: float
    validation: Optional[float] = None


def _check(problem: Problem, psi, u):
    n, Ls = problem.Y.shape
    if psi.shape != (n, Ls):
        raise ValueError(f"psi has shape {psi.shape}, expected {(n, Ls)}")
    if u.shape[0] != problem.M.shape[1]:
        raise ValueError(f"U has {u.shape[0]} rows, embeddings have {problem.M.shape[1]} columns")


def dual_objective(state: DualState, problem: Problem, config: TrainConfig) -> float:
    """Value of the min-max dual at ``(psi, u)``."""
    psi, u = state.psi, state.u
    _check(problem, psi, u)
    linear = float(np.sum(psi * (2.0 * problem.Y - 1.0)))
    G = problem.X.T @ psi
    K = label_kernel(problem.M_s, u)
    quad = float(np.sum((G.T @ G) * K)) / (2.0 * config.beta)
    reg = eval_penalty(u, problem.M, problem.Q, problem.q_aux, config.gamma, config.lam)
    return linear + reg - quad


def primal_objective(model: ModelParams, problem: Problem) -> float:
    """Hinge losses with optimal slacks plus both regularizers."""
    X, Y = problem.X, problem.Y
    if model.W.shape[0] != X.shape[1]:
        raise ValueError("W does not match the feature dimension")
    F = (X @ model.W) @ (problem.M_s @ model.U).T
    F0 = X @ model.W0
    pos = Y > 0.5
    big = np.inf
    xi = np.max(np.where(pos, 1.0 + F0[:, None] - F, -big), axis=1)
    eta = np.max(np.where(~pos, 1.0 + F - F0[:, None], -big), axis=1)
    loss = float(np.sum(np.maximum(xi, 0.0)) + np.sum(np.maximum(eta, 0.0)))
    ridge = 0.5 * model.beta * (float(np.sum(model.W**2)) + float(np.sum(model.W0**2)))
    reg = eval_penalty(model.U, problem.M, problem.Q, problem.q_aux, model.gamma, model.lam)
    return loss + ridge + reg


def build_S(psi, problem: Problem, beta, gamma, lam) -> np.ndarray:
    if beta <= 0:
        raise ValueError("beta must be positive")
    psi = np.asarray(psi, dtype=float)
    _check(problem, psi, np.zeros((problem.M.shape[1], 1)))
    B = problem.X.T @ psi @ problem.M_s
    P = label_structure(problem.Q, problem.q_aux, gamma, lam)
    S = (B.T @ B) / (2.0 * beta) - 0.5 * (problem.M.T @ P @ problem.M)
    return 0.5 * (S + S.T)


def update_U(state: DualState, problem: Problem, config: TrainConfig) -> DualState:
    S = build_S(state.psi, problem, config.beta, config.gamma, config.lam)
    eig = top_r_eigenvectors(S, config.r)
    return replace(state, u=eig.vectors)


def recover_primal(psi, X, M_s, u, beta):
    """``W = X' psi M^s U / beta`` and ``W0 = -X' psi 1 / beta``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    psi = np.asarray(psi, dtype=float)
    X = np.asarray(X, dtype=float)
    M_s = np.asarray(M_s, dtype=float)
    u = np.asarray(u, dtype=float)
    if psi.shape[0] != X.shape[0] or psi.shape[1] != M_s.shape[0] or M_s.shape[1] != u.shape[0]:
        raise ValueError("inconsistent shapes for primal recovery")
    G = X.T @ psi
    return (G @ M_s @ u) / beta, -G.sum(axis=1) / beta


def row_update(state: DualState, problem: Problem, config: TrainConfig, i: int) -> float:
    """Exactly maximize the dual over row ``i`` in place; returns the dual gain."""
    qp = assemble_row_qp(i, problem.X, problem.Y, state.psi, state.u, problem.M_s, config.beta)
    old = state.psi[i].copy()
    z = solve_row_qp(qp, config.qp_tolerance, config.qp_max_iter)
    state.psi[i] = z
    return qp.objective(old) - qp.objective(z)


def coordinate_pass(state: DualState, problem: Problem, config: TrainConfig) -> DualState:
    """One ascending-index sweep of exact row maximizations, for fixed U."""
    _check(problem, state.psi, state.u)
    psi = np.ascontiguousarray(state.psi, dtype=float).copy()
    G = np.ascontiguousarray(problem.X.T @ psi)
    K = label_kernel(problem.M_s, state.u)
    gains, resid = kernels.coordinate_pass(
        problem.X, problem.Y, psi, G, K, config.beta, config.qp_tolerance, config.qp_max_iter
    )
    bad = np.flatnonzero(resid > config.qp_tolerance)
    if bad.size:
        i = int(bad[0])
        raise QPConvergenceError(psi[i].copy(), float(resid[i]), i)
    return replace(state, psi=psi)


def refit_psi(state: DualState, problem: Problem, config: TrainConfig) -> DualState:
    """Extra passes with U frozen so the recovered (W, W0) is the max-margin
    solution for the U being returned."""
    prev = dual_objective(state, problem, config)
    for _ in range(config.final_passes):
        state = coordinate_pass(state, problem, config)
        dual = dual_objective(state, problem, config)
        if abs(dual - prev) / (1.0 + abs(dual)) < config.dual_tolerance:
            break
        prev = dual
    return state


def model_from_state(state: DualState, problem: Problem, config: TrainConfig, names=()) -> ModelParams:
    W, W0 = recover_primal(state.psi, problem.X, problem.M_s, state.u, config.beta)
    return ModelParams(
        W=W,
        W0=W0,
        U=state.u,
        beta=config.beta,
        gamma=config.gamma,
        lam=config.lam,
        r=config.r,
        label_names=tuple(names),
        seen_count=problem.seen_count,
    )


def train(
    dataset: Dataset,
    labels: LabelSpace,
    R=None,
    config: TrainConfig = TrainConfig(),
    validation: Optional[Callable[[ModelParams], float]] = None,
    on_iteration: Optional[Callable[[TraceRecord, DualState], None]] = None,
):
    """Alternate coordinate passes and U updates from the all-zero start.

    Returns ``(model, state, trace)``. With ``config.return_best`` and a
    ``validation`` callable, the returned model is the iterate with the best
    validation score instead of the last one.
    """
    problems = errors_only(validate(dataset, labels))
    if problems:
        raise ValidationError(problems)
    if config.lam > 0 and R is None:
        raise ConfigError("lambda > 0 requires an auxiliary similarity matrix")
    if config.r > labels.m:
        raise ConfigError(f"r={config.r} exceeds embedding dimension {labels.m}")
    if labels.unseen_count < 1:
        raise ConfigError("label space has no unseen labels")
    problem = Problem.build(dataset, labels, R)

    state = DualState.zeros(dataset.n, labels.seen_count, labels.m, config.r)
    prev = dual_objective(state, problem, config)
    trace = []
    best = None
    start = time.perf_counter()
    for it in range(1, config.max_outer_iterations + 1):
        for _ in range(config.passes_per_outer):
            state = coordinate_pass(state, problem, config)
        state = update_U(state, problem, config)
        dual = dual_objective(state, problem, config)
        state.outer_iteration = it
        state.dual_history.append(dual)
        model = model_from_state(state, problem, config, labels.names)
        score = validation(model) if validation is not None else None
        rec = TraceRecord(
            iteration=it,
            dual=dual,
            primal=primal_objective(model, problem),
            psi_norm=float(np.linalg.norm(state.psi)),
            elapsed=time.perf_counter() - start,
            validation=score,
        )
        trace.append(rec)
        log.debug("iter %d dual %.10g primal %.10g", it, rec.dual, rec.primal)
        if on_iteration is not None:
            on_iteration(rec, state.snapshot())
        if score is not None and (best is None or score > best[0]):
            best = (score, model, state.snapshot())
        if abs(dual - prev) / (1.0 + abs(dual)) < config.dual_tolerance:
            break
        prev = dual

    if config.return_best and best is not None:
        chosen = best[2]
        state = DualState(chosen.psi.copy(), chosen.u.copy(), chosen.outer_iteration, list(chosen.dual_history))
    state = refit_psi(state, problem, config)
    model = model_from_state(state, problem, config, labels.names)
    return model, state, trace
