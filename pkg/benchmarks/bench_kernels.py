"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each workload runs on identical inputs under both backends. The table shows
the best wall time of ``--repeat`` runs and the speedup of the extension.
"""

import argparse
import sys
import time

import numpy as np

from taep import _pykernels
from taep.qp import label_kernel
from taep.synth import SynthConfig, generate

try:
    from taep import _ckernels
except ImportError:
    _ckernels = None


def row_qps(count=300, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        k = int(rng.integers(4, 13))
        B = rng.standard_normal((k, int(rng.integers(1, 5))))
        pos = np.arange(k) < int(rng.integers(1, k))
        out.append((B @ B.T + 1.0, rng.standard_normal(k), pos))
    return out


def pass_inputs():
    task = generate(SynthConfig(seed=0, n_train=200, L_seen=10, m=20, d=30))
    rng = np.random.default_rng(1)
    U = np.linalg.qr(rng.standard_normal((20, 5)))[0]
    X = np.ascontiguousarray(task.train.features)
    Y = np.ascontiguousarray(task.train.labels)
    return X, Y, label_kernel(task.labels.seen, U)


def workloads():
    qps = row_qps()
    X, Y, K = pass_inputs()
    S = np.random.default_rng(2).standard_normal((60, 60))
    S = S + S.T

    def solve(mod):
        for H, f, pos in qps:
            mod.solve_row_qp(H, f, pos, 1e-10, 10000)

    def sweep(mod):
        psi = np.zeros(Y.shape)
        mod.coordinate_pass(X, Y, psi, X.T @ psi, K, 1.0, 1e-10, 10000)

    def eig(mod):
        mod.jacobi_eigh(S)

    def project(mod):
        for H, f, pos in qps:
            mod.project_feasible(f, pos)

    return [
        ("row QP solve (300 rows)", solve),
        ("coordinate pass (n=200, L=10)", sweep),
        ("Jacobi eigensolver (60x60)", eig),
        ("feasible projection (300 rows)", project),
    ]


def best_time(fn, mod, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(mod)
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'workload':<34}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in workloads():
        py = best_time(fn, _pykernels, args.repeat)
        cy = best_time(fn, _ckernels, args.repeat)
        print(f"{name:<34}{py:12.4f}{cy:12.4f}{py / cy:9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
