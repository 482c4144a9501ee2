"""Acceptance criteria, one function each.

Every ``criterion_*`` function returns ``(passed, detail)``. Under pytest the
outcome is asserted and a one-line PASS/FAIL summary is printed at the end of
the session (see ``conftest.py``). Running this file directly prints the same
lines without pytest.
"""

import math
import sys
import time

import numpy as np
import pytest

from taep.cli import main as cli_main
from taep.eigen import top_r_eigenvectors
from taep.metrics import average_precision, hamming, macro_f1, micro_f1, miap, miap_from_scores
from taep.qp import assemble_row_qp, is_feasible, oracle_solve_row_qp, solve_row_qp
from taep.regularizers import build_normalized_laplacian, build_transfer_q
from taep.synth import SynthConfig, generate, prototype_similarity
from taep.trainer import (
    DualState,
    Problem,
    TrainConfig,
    build_S,
    dual_objective,
    primal_objective,
    row_update,
    train,
    update_U,
)
from taep.tuning import evaluate_model, make_grid, spearman, sweep, tune

RESULTS = {}


def record(number, title):
    def wrap(fn):
        def run():
            start = time.perf_counter()
            passed, detail = fn()
            elapsed = time.perf_counter() - start
            RESULTS[number] = (title, passed, f"{detail}; {elapsed:.1f}s")
            return passed, detail, elapsed

        run.__name__ = fn.__name__
        return run

    return wrap


# -- 1 ------------------------------------------------------------------------


@record(1, "row QP matches the enumeration oracle")
def criterion_1():
    rng = np.random.default_rng(2024)
    worst, infeasible = 0.0, 0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        n, d, m = 5, 4, int(rng.integers(2, 6))
        X = rng.standard_normal((n, d))
        Y = np.zeros((n, k))
        for row in Y:
            row[rng.permutation(k)[: int(rng.integers(1, k))]] = 1
        Psi = np.array([rng.dirichlet(np.ones(k)) * np.where(y > 0, 1.0, -1.0) * 0.5 for y in Y])
        U = np.linalg.qr(rng.standard_normal((m, int(rng.integers(1, m + 1)))))[0]
        qp = assemble_row_qp(int(rng.integers(n)), X, Y, Psi, U, rng.standard_normal((k, m)), float(rng.uniform(0.2, 10)))
        z = solve_row_qp(qp, 1e-10)
        infeasible += not is_feasible(z, qp.pos)
        worst = max(worst, abs(qp.objective(z) - qp.objective(oracle_solve_row_qp(qp))))
    return worst <= 1e-8 and infeasible == 0, f"max objective gap {worst:.2e}, infeasible {infeasible}"


# -- 2 ------------------------------------------------------------------------


@record(2, "top-r eigenvectors attain the Ky Fan maximum")
def criterion_2():
    rng = np.random.default_rng(7)
    gap = ortho = resid = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 51))
        A = rng.standard_normal((m, m))
        S = A + A.T
        r = int(rng.integers(1, m + 1))
        res = top_r_eigenvectors(S, r)
        V = res.vectors
        top = np.sort(np.linalg.eigvalsh(S))[::-1][:r].sum()
        gap = max(gap, abs(np.trace(V.T @ S @ V) - top))
        ortho = max(ortho, float(np.max(np.abs(V.T @ V - np.eye(r)))))
        col = np.linalg.norm(S @ V - V * res.values, axis=0).max()
        resid = max(resid, col / np.linalg.norm(S))
    ok = gap <= 1e-8 and ortho <= 1e-10 and resid <= 1e-8
    return ok, f"trace gap {gap:.1e}, orthonormality {ortho:.1e}, relative residual {resid:.1e}"


# -- 3, 4, 5 ------------------------------------------------------------------

DUAL_TASK = SynthConfig(seed=0, n_train=50, n_test=10, L_seen=6, L_unseen=4, m=12, d=20)
DUAL_CONFIG = TrainConfig(r=4, beta=1.0, gamma=1.0, lam=0.5, max_outer_iterations=50)


def _dual_run():
    """Replays the training loop one row at a time, checking every step."""
    task = generate(DUAL_TASK)
    R = prototype_similarity(task, noise=0.05, seed=0)
    problem = Problem.build(task.train, task.labels, R)
    cfg = DUAL_CONFIG
    state = DualState.zeros(task.train.n, 6, 12, cfg.r)
    pos = task.train.labels > 0.5
    worst_drop, worst_kyfan, infeasible, passes = 0.0, 0.0, 0, 0
    prev = dual_objective(state, problem, cfg)
    for _ in range(cfg.max_outer_iterations):
        before = prev
        for i in range(task.train.n):
            row_update(state, problem, cfg, i)
            now = dual_objective(state, problem, cfg)
            worst_drop = max(worst_drop, before - now)
            before = now
        passes += 1
        infeasible += sum(not is_feasible(state.psi[i], pos[i]) for i in range(task.train.n))
        S = build_S(state.psi, problem, cfg.beta, cfg.gamma, cfg.lam)
        state = update_U(state, problem, cfg)
        top = np.sort(np.linalg.eigvalsh(S))[::-1][: cfg.r].sum()
        worst_kyfan = max(worst_kyfan, abs(np.trace(state.u.T @ S @ state.u) - top))
        dual = dual_objective(state, problem, cfg)
        if abs(dual - prev) / (1.0 + abs(dual)) < cfg.dual_tolerance:
            break
        prev = dual
    return worst_drop, worst_kyfan, infeasible, passes


@record(3, "dual ascent per row and exact U-step")
def criterion_3():
    drop, kyfan, _, passes = _dual_run()
    ok = drop <= 1e-9 and kyfan <= 1e-8
    return ok, f"{passes} passes, worst row decrease {drop:.1e}, Ky Fan gap {kyfan:.1e}"


@record(4, "dual rows stay feasible after every pass")
def criterion_4():
    _, _, infeasible, passes = _dual_run()
    return infeasible == 0, f"{infeasible} infeasible rows over {passes} passes"


@record(5, "primal-dual consistency at convergence")
def criterion_5():
    task = generate(DUAL_TASK)
    R = prototype_similarity(task, noise=0.05, seed=0)
    model, state, _ = train(task.train, task.labels, R, DUAL_CONFIG)
    problem = Problem.build(task.train, task.labels, R)
    X, Ms, U = problem.X, problem.M_s, model.U
    lhs = X @ model.W @ U.T @ Ms.T
    rhs = X @ X.T @ state.psi @ Ms @ U @ U.T @ Ms.T / DUAL_CONFIG.beta
    err = float(np.max(np.abs(lhs - rhs)))
    primal = primal_objective(model, problem)
    dual = dual_objective(state, problem, DUAL_CONFIG)
    ok = err <= 1e-8 and primal >= dual - 1e-6
    return ok, f"score identity error {err:.1e}, primal {primal:.6f} >= dual {dual:.6f}"


# -- 6 ------------------------------------------------------------------------

TRANSFER_TRAIN = TrainConfig(r=3, max_outer_iterations=30)
TRANSFER_GRID = make_grid((1.0, 2.0, 5.0, 10.0), (1e2, 1e3, 1e4, 1e5))


def transfer_seed(seed):
    task = generate(SynthConfig(seed=seed, n_train=100, n_test=2000, transfer_tightness=0.9))
    tuned = tune(task.train, task.labels, None, TRANSFER_TRAIN, TRANSFER_GRID, seed=seed)
    s = tuned.selected
    baseline, _, _ = train(task.train, task.labels, None, TrainConfig(r=3, max_outer_iterations=30, beta=s.beta))
    with_gamma = evaluate_model(tuned.model, task.test_features, task.test_truth, task.labels).miap
    without = evaluate_model(baseline, task.test_features, task.test_truth, task.labels).miap
    base = TrainConfig(r=3, max_outer_iterations=30, beta=s.beta, gamma=s.gamma)
    rows = sweep(task.train, task.labels, task.test_features, task.test_truth, None, base, "gamma")
    rho = spearman(np.arange(len(rows)), [row.result.miap for row in rows])
    return with_gamma, without, rho


@record(6, "transfer regularizer beats gamma = 0 and shrinking gamma hurts")
def criterion_6():
    wins = trend = 0
    for seed in range(10):
        a, b, rho = transfer_seed(seed)
        wins += a > b
        trend += rho <= 0
    return wins >= 8 and trend >= 8, f"gamma > 0 wins {wins}/10, non-increasing sweep {trend}/10"


# -- 7 ------------------------------------------------------------------------

AUX_TRAIN = TrainConfig(r=5, max_outer_iterations=30)
AUX_GRID = make_grid((1.0, 2.0, 5.0, 10.0), (1e3, 1e4), (10.0, 100.0))


def aux_seed(seed):
    task = generate(SynthConfig(seed=seed, n_train=100, n_test=2000, m=60, embedding_noise=1.0))
    R = prototype_similarity(task, noise=0.05, seed=seed, neighbours=3)
    tuned = tune(task.train, task.labels, R, AUX_TRAIN, AUX_GRID, seed=seed)
    s = tuned.selected
    cfg = TrainConfig(r=5, max_outer_iterations=30, beta=s.beta, gamma=s.gamma)
    baseline, _, _ = train(task.train, task.labels, None, cfg)
    with_aux = evaluate_model(tuned.model, task.test_features, task.test_truth, task.labels).miap
    without = evaluate_model(baseline, task.test_features, task.test_truth, task.labels).miap
    return with_aux, without


@record(7, "auxiliary similarity beats lambda = 0")
def criterion_7():
    wins = sum(a > b for a, b in (aux_seed(seed) for seed in range(10)))
    return wins >= 7, f"lambda > 0 wins {wins}/10"


# -- 8 ------------------------------------------------------------------------


def _counting_oracle(pred, truth):
    L = pred.shape[1]
    tp = [sum(pred[i, c] and truth[i, c] for i in range(pred.shape[0])) for c in range(L)]
    fp = [sum(pred[i, c] and not truth[i, c] for i in range(pred.shape[0])) for c in range(L)]
    fn = [sum(truth[i, c] and not pred[i, c] for i in range(pred.shape[0])) for c in range(L)]
    f1 = lambda t, p, n: 2 * t / (2 * t + p + n) if 2 * t + p + n else 0.0
    mism = sum(pred[i, c] != truth[i, c] for i in range(pred.shape[0]) for c in range(L))
    return f1(sum(tp), sum(fp), sum(fn)), sum(map(f1, tp, fp, fn)) / L, mism / pred.size


def _oracle_miap(scores, truth):
    aps = []
    for s, t in zip(scores, truth):
        order = sorted(range(len(s)), key=lambda j: (-s[j], j))
        hits, prec = 0, []
        for rank_, j in enumerate(order, 1):
            if t[j]:
                hits += 1
                prec.append(hits / rank_)
        if prec:
            aps.append(sum(prec) / len(prec))
    return sum(aps) / len(aps) if aps else 0.0


@record(8, "metric fixtures and counting oracle")
def criterion_8():
    truth = np.array([[1, 0, 1, 0], [0, 0, 1, 1]])
    flipped = truth.copy()
    flipped[1, 0] = 1
    fixtures = [
        average_precision([0, 1, 2, 3], [1, 0, 1, 0]) == 0.5 * (1.0 + 2.0 / 3.0),
        average_precision([1, 0], [1, 1]) == 1.0,
        miap([[0, 1], [0, 1]], [[1, 0], [0, 1]]) == 0.75,
        micro_f1(truth, truth) == 1.0,
        micro_f1(np.zeros_like(truth), truth) == 0.0,
        micro_f1([[1, 1], [0, 1]], [[1, 0], [1, 1]]) == 4 / 6,
        macro_f1([[1, 0], [1, 0]], [[1, 1], [1, 1]])[0] == 0.5,
        macro_f1([[1, 0], [1, 1]], [[1, 0], [1, 1]])[0] == 1.0,
        macro_f1([[1], [1]], [[1], [0]])[1][0] == 2 / 3,
        hamming(truth, truth) == 0.0,
        hamming(1 - truth, truth) == 1.0,
        hamming(flipped, truth) == 0.125,
    ]
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(100):
        pred = rng.integers(0, 2, (5, 6))
        tru = rng.integers(0, 2, (5, 6))
        scores = rng.choice([0.0, 0.5, 1.0, 2.0], (5, 6))
        micro, macro, ham = _counting_oracle(pred, tru)
        got = (micro_f1(pred, tru), macro_f1(pred, tru)[0], hamming(pred, tru), miap_from_scores(scores, tru))
        want = (micro, macro, ham, _oracle_miap(scores, tru))
        mismatches += any(not math.isclose(g, w, rel_tol=0, abs_tol=1e-15) for g, w in zip(got, want))
    ok = all(fixtures) and mismatches == 0
    return ok, f"{sum(fixtures)}/{len(fixtures)} fixtures, {mismatches}/100 oracle mismatches"


# -- 9 ------------------------------------------------------------------------


@record(9, "transfer Q fixture and Laplacian null vector")
def criterion_9():
    expected = np.array(
        [[0, 0, -1 / 8, -1 / 8], [0, 0, -1 / 8, -1 / 8], [-1 / 8, -1 / 8, 0, 1 / 2], [-1 / 8, -1 / 8, 1 / 2, 0]]
    )
    q_ok = np.array_equal(build_transfer_q(2, 2), expected)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        L = int(rng.integers(2, 20))
        A = rng.random((L, L)) * (rng.random((L, L)) < 0.6)
        R = A + A.T + np.eye(L)
        aux = build_normalized_laplacian(R)
        worst = max(worst, float(np.max(np.abs(aux.q_aux @ np.sqrt(aux.degree)))))
    return q_ok and worst <= 1e-8, f"Q fixture {'exact' if q_ok else 'differs'}, null-vector error {worst:.1e}"


# -- 10 -----------------------------------------------------------------------


@record(10, "CLI training and tuning are deterministic")
def criterion_10():
    import contextlib
    import io as stdio
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        quiet = contextlib.redirect_stdout(stdio.StringIO())
        with quiet:
            cli_main(["synth", "--seed", "4", "--n-train", "60", "--aux-noise", "0.05", "--out-dir", str(d)])
        common = [
            "--features", str(d / "train_features.txt"), "--labels", str(d / "train_labels.txt"),
            "--embeddings", str(d / "embeddings.txt"), "--seen-count", "6", "--r", "3",
            "--aux-sim", str(d / "aux_sim.txt"), "--max-iters", "15",
        ]
        outputs = []
        for name in ("a", "b"):
            buf = stdio.StringIO()
            with contextlib.redirect_stdout(buf):
                cli_main(["train", *common, "--gamma", "10", "--lambda", "1", "--out", str(d / f"{name}.txt")])
                cli_main(["tune", *common, "--beta-grid", "1,5", "--gamma-grid", "1,100", "--lambda-grid", "0.1,10",
                          "--out", str(d / f"t{name}.txt")])
            outputs.append([line for line in buf.getvalue().splitlines() if line.split("=")[0] in
                            ("beta", "gamma", "lambda")])
        same_model = (d / "a.txt").read_bytes() == (d / "b.txt").read_bytes()
        same_tuned = (d / "ta.txt").read_bytes() == (d / "tb.txt").read_bytes()
        same_selection = outputs[0] == outputs[1] and len(outputs[0]) == 3
    ok = same_model and same_tuned and same_selection
    return ok, f"model files identical {same_model}, selection {' '.join(outputs[0])}"


# -- pytest entry points ------------------------------------------------------

LIMITS = {1: 10, 2: 10, 3: 60, 6: 600, 7: 600}
CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    passed, detail, elapsed = CRITERIA[number - 1]()
    limit = LIMITS.get(number)
    if limit is not None and elapsed >= limit:
        RESULTS[number] = (RESULTS[number][0], False, RESULTS[number][2] + f" (limit {limit}s)")
        pytest.fail(f"criterion {number} took {elapsed:.1f}s, limit {limit}s")
    assert passed, detail


def summary_lines():
    for number in sorted(RESULTS):
        title, passed, detail = RESULTS[number]
        yield f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} ({detail})"


if __name__ == "__main__":
    for fn in CRITERIA:
        fn()
    for line in summary_lines():
        print(line)
    sys.exit(0 if all(p for _, p, _ in RESULTS.values()) else 1)
