#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_backends.py [--repeats N]

Times the four hot kernels on pipeline-realistic shapes (64x64 images,
hidden 16, patch half-width 2) plus one end-to-end training step.
"""

import argparse
import time

import numpy as np

from segbias import _kernels_py as python_kernels
from segbias.morphology import disk_offsets

try:
    from segbias import _kernels as compiled_kernels
except ImportError:
    compiled_kernels = None


def bench(fn, repeats):
    # one warm-up call, then best-of-N wall time
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(kernels, rng):
    mask = (rng.random((64, 64)) < 0.5).astype(np.uint8)
    offs = disk_offsets(3)
    img = rng.uniform(0, 1, (64, 64))
    X = kernels.patch_features(img, 2)
    hd = 16
    W1 = rng.normal(0, 0.3, (hd, X.shape[1]))
    b1 = rng.normal(0, 0.1, hd)
    gamma = rng.normal(1, 0.2, hd)
    beta = rng.normal(0, 0.2, hd)
    w2 = rng.normal(0, 0.3, hd)
    b2 = 0.1
    _, hidden = kernels.forward_dense(X, W1, b1, gamma, beta, w2, b2)
    gz = rng.normal(0, 1e-3, X.shape[0])
    ghid = rng.normal(0, 1e-4, hd)
    return {
        "erode 64x64 r3": lambda: kernels.erode(mask, offs),
        "dilate 64x64 r3": lambda: kernels.dilate(mask, offs),
        "patch_features 64x64 p2": lambda: kernels.patch_features(img, 2),
        "forward_dense 4096x27": lambda: kernels.forward_dense(X, W1, b1, gamma, beta, w2, b2),
        "backward_dense 4096x27": lambda: kernels.backward_dense(X, hidden, gamma, beta, w2, gz, ghid),
    }


def train_step_case(backend_name):
    import importlib
    import os

    os.environ["SEGBIAS_BACKEND"] = backend_name
    import segbias._backend

    importlib.reload(segbias._backend)
    import segbias.learner

    importlib.reload(segbias.learner)
    from segbias.corpus import GenConfig, generate
    from segbias.learner import BatchItem, TrainConfig, init_model, loss_and_grad

    corpus = generate(GenConfig(n_samples=16, seed=0))
    model = init_model([0, 1], seed=0)
    batch = [BatchItem(s.image, s.mask_obs, s.group) for s in corpus.samples[:16]]
    cfg = TrainConfig()
    return lambda: loss_and_grad(model, batch, cfg)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = {"python": python_kernels}
    if compiled_kernels is not None:
        backends["compiled"] = compiled_kernels
    else:
        print("compiled extension not available; benchmarking fallback only")

    results = {}
    for name, kernels in backends.items():
        for case, fn in kernel_cases(kernels, np.random.default_rng(0)).items():
            results.setdefault(case, {})[name] = bench(fn, args.repeats)

    for name in backends:
        results.setdefault("loss_and_grad batch=16", {})[name] = bench(
            train_step_case(name), max(3, args.repeats // 4)
        )

    width = max(len(k) for k in results)
    header = f"{'kernel':<{width}}  " + "".join(f"{n:>12}" for n in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case, times in results.items():
        row = f"{case:<{width}}  " + "".join(f"{times[n] * 1e3:>10.3f}ms" for n in backends)
        if len(backends) == 2:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
