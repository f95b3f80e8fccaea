"""Benchmark the compiled kernel core against the pure-NumPy fallback.

Usage: python benchmarks/bench_kernels.py [batch-size]

Times the four kernel phases (forward with first/second-order tangents,
value-only and tangent backward) for both network kinds, plus one full
training iteration on a synthetic batch through each backend.
"""

import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from monocurve import _kernels
from monocurve.nets import init_icnn, init_plain

try:
    from monocurve import _speedups
except ImportError:
    _speedups = None


def best_of(fn, reps=15):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return 1000.0 * best


def bench_kernels(n):
    rng = np.random.default_rng(0)
    xs = rng.uniform(-3, 3, n)
    gy = rng.standard_normal(n)
    backends = [("numpy", _kernels)] + ([("compiled", _speedups)] if _speedups else [])
    print(f"kernel phases, batch {n}, 4x64 nets (best-of-15, ms)")
    print(f"{'kind':6s} {'backend':9s} {'fwd_o1':>8s} {'fwd_o2':>8s} {'bwd_val':>8s} {'bwd_tan':>8s}")
    for kind, init in (("icnn", init_icnn), ("plain", init_plain)):
        net = init(np.random.default_rng(1))
        args = (net.w_in, net.b, net.a_hidden, net.w_skip, net.a_out,
                float(net.w_out), float(net.b_out), net.has_skip)
        pargs = (net.w_in, net.a_hidden, net.w_skip, net.a_out,
                 float(net.w_out), net.has_skip)
        for name, mod in backends:
            cache = mod.forward(xs, *args, order=1, want_cache=True)[3]
            row = [
                best_of(lambda: mod.forward(xs, *args, order=1, want_cache=True)),
                best_of(lambda: mod.forward(xs, *args, order=2, want_cache=True)),
                best_of(lambda: mod.backward(cache, *pargs, gy, None)),
                best_of(lambda: mod.backward(cache, *pargs, gy, gy)),
            ]
            print(f"{kind:6s} {name:9s} " + " ".join(f"{v:8.1f}" for v in row))


def bench_train_iteration(n):
    from monocurve import _backend, train
    from monocurve.datagen import SyntheticSpec, generate

    sample = generate(SyntheticSpec(family=2, dim=2, n=n, seed=0))
    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and _speedups is None:
            continue
        _backend.forward = (_speedups if backend == "compiled" else _kernels).forward
        _backend.backward = (_speedups if backend == "compiled" else _kernels).backward
        cfg = train.TrainConfig(max_iters=5, patience=5, min_iters=5, seed=0)
        t0 = time.perf_counter()
        train.fit(sample.X, cfg)
        results[backend] = (time.perf_counter() - t0) / 5
    print(f"\nfull training iteration, n={n}, k=2 (5-iteration average)")
    for backend, dt in results.items():
        print(f"  {backend:9s} {1000 * dt:8.1f} ms/iteration")
    if len(results) == 2:
        print(f"  speedup   {results['python'] / results['compiled']:8.2f}x")


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 4500
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    if _speedups is None:
        print("compiled backend not built; benchmarking the NumPy fallback only")
    bench_kernels(n)
    bench_train_iteration(n)
