#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot paths (batched scoring and batched loss+gradients)
across representative shapes, plus one full training run. Run:

    python3 benchmarks/bench_kernels.py [--rows 2000] [--repeats 200]
"""

import argparse
import time

import numpy as np

from labsentry import autoencoder as ae
from labsentry import kernels

try:
    import labsentry._kernels_nb  # noqa: F401

    BACKENDS = ("numpy", "numba")
except ImportError:
    BACKENDS = ("numpy",)
    print("numba not importable; benchmarking the fallback only\n")


def time_call(fn, repeats):
    fn()  # warmup / jit compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s}{'shape':>18s}" + "".join(f"{b:>14s}" for b in BACKENDS) + f"{'speedup':>10s}")
    for d in (16, 64, 128):
        for batch in (16, 64, 256):
            model = ae.init(d, seed=1)
            X = ae.to_token_batch(model, rng.random((batch, 7)))
            params = model.kernel_params()
            for name, call in (
                ("batch_scores", lambda b: kernels.batch_scores(X, params, True, backend=b)),
                ("batch_loss_and_grads", lambda b: kernels.batch_loss_and_grads(X, params, True, backend=b)),
            ):
                times = {b: time_call(lambda b=b: call(b), repeats) for b in BACKENDS}
                cols = "".join(f"{times[b]*1e6:12.1f}us" for b in BACKENDS)
                speed = f"{times['numpy'] / times['numba']:.2f}x" if "numba" in times else "-"
                print(f"{name:28s}{f'B={batch} d={d}':>18s}{cols}{speed:>10s}")


def bench_training(rows):
    rng = np.random.default_rng(1)
    data = 0.5 + 0.1 * rng.standard_normal((rows, 7))
    cfg = ae.TrainConfig(batch_size=16, learning_rate=7e-4, epochs=5, patience=10**9, seed=0)
    print(f"\nfull training, {rows} rows x {cfg.epochs} epochs (d=64, batch 16):")
    results = {}
    for backend in BACKENDS:
        # the training loop reads the backend through the kernels dispatch
        kernels._BACKEND = backend
        model = ae.init(64, seed=0)
        ae.train(model, data, cfg)  # warmup/jit
        t0 = time.perf_counter()
        _, hist = ae.train(ae.init(64, seed=0), data, cfg)
        results[backend] = time.perf_counter() - t0
        print(f"  {backend:6s}: {results[backend]:.2f}s  (final val loss {hist.val_loss[-1]:.6f})")
    kernels._BACKEND = kernels._pick_backend()
    if len(results) == 2:
        print(f"  speedup: {results['numpy'] / results['numba']:.2f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    bench_kernels(args.repeats)
    bench_training(args.rows)


if __name__ == "__main__":
    main()
