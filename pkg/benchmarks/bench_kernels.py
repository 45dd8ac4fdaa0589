"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats N]
The numba backend must be importable; the script times both paths in one
process regardless of the AEROVPR_PURE_NUMPY setting.
"""

import argparse
import time

import numpy as np

from aerovpr import kernels as K


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if K.BACKEND != "numba":
        print("numba backend unavailable (or disabled); nothing to compare")
        return

    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (1024, 1024))
    xs = rng.uniform(0, 1023, 1_000_000)
    ys = rng.uniform(0, 1023, 1_000_000)
    a = rng.normal(size=(512, 64))
    b = rng.normal(size=(512, 64))
    src = rng.uniform(0, 300, (40, 2))
    h = np.array([[1.0, 0.02, 5.0], [-0.01, 1.0, -3.0], [1e-5, -2e-5, 1.0]])
    ph = np.hstack([src, np.ones((40, 1))])
    proj = (h @ ph.T).T
    dst = proj[:, :2] / proj[:, 2:3]
    dst[30:] += 50.0
    samples = np.stack(
        [rng.choice(40, 4, replace=False) for _ in range(2000)]
    ).astype(np.int64)

    cases = [
        (
            "noise_canvas 2048x2048x7oct",
            K.noise_canvas_numba,
            K.noise_canvas_numpy,
            (2048, 2048, 0.0, 0.0, 1024.0, 7, 0.45, 2.0, 42),
        ),
        (
            "bilinear_sample 1e6 pts",
            K.bilinear_sample_numba,
            K.bilinear_sample_numpy,
            (img, xs, ys),
        ),
        (
            "harris_response 1024^2",
            K.harris_response_numba,
            K.harris_response_numpy,
            (img, 0.04),
        ),
        (
            "pairwise_sqdist 512x512x64",
            K.pairwise_sqdist_numba,
            K.pairwise_sqdist_numpy,
            (a, b),
        ),
        (
            "ransac_scan 2000 iters, 40 pts",
            K.ransac_scan_numba,
            K.ransac_scan_numpy,
            (src, dst, samples, 2.0),
        ),
    ]

    print(f"{'kernel':34s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, f_nb, f_np, fargs in cases:
        t_nb = timeit(f_nb, *fargs, repeats=args.repeats)
        t_np = timeit(f_np, *fargs, repeats=args.repeats)
        print(f"{name:34s} {t_nb * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
