#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three fused training-step kernels and a full optimizer step at a
few batch/output sizes and prints the speedup. Run from the repo root after
``python setup.py build_ext --inplace``:

    python benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import time

import numpy as np

from ontoevent import kernels


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(backend, batch, dim, repeat, rng):
    logits = rng.normal(size=(batch, dim))
    targets = (rng.random((batch, dim)) < 0.3).astype(float)
    targets[:, 0] = 1.0
    weights = rng.uniform(0.1, 6.0, size=dim)
    probs = backend.sigmoid(logits, 1e-12)
    param = rng.normal(size=batch * dim)
    vel = np.zeros(batch * dim)
    grad = rng.normal(size=batch * dim)
    return {
        "sigmoid": time_call(lambda: backend.sigmoid(logits, 1e-12), repeat),
        "bce": time_call(lambda: backend.bce_loss_dz(probs, targets, weights), repeat),
        "cos": time_call(lambda: backend.cos_loss_dz(probs, targets, weights), repeat),
        "nesterov": time_call(
            lambda: backend.nesterov_step(param, vel, grad, 0.05, 0.9, 1e-5), repeat
        ),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    names = kernels.available_backends()
    if "compiled" not in names:
        print("compiled kernels not built; run: python setup.py build_ext --inplace")
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})\n")

    sizes = [(32, 64), (128, 256), (128, 409), (512, 1024)]
    header = f"{'size':>12s} {'kernel':>9s} " + " ".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    rng = np.random.default_rng(0)
    for batch, dim in sizes:
        results = {n: bench_case(kernels.get_backend(n), batch, dim, args.repeat, rng)
                   for n in names}
        for kernel in ("sigmoid", "bce", "cos", "nesterov"):
            row = f"{f'{batch}x{dim}':>12s} {kernel:>9s} "
            row += " ".join(f"{results[n][kernel] * 1e6:>10.1f}us" for n in names)
            if len(names) == 2:
                ratio = results["numpy"][kernel] / results["compiled"][kernel]
                row += f" {ratio:>8.2f}x"
            print(row)
        print()


if __name__ == "__main__":
    main()
