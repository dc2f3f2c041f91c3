"""Time the compiled kernels against the numpy fallback on realistic sizes.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speedup. Without the compiled extension only the numpy column is filled.
"""

import argparse
import timeit

import numpy as np

from rxverify import kernels
from rxverify.grid import qam16_constellation


def cases(rng):
    points, labels = qam16_constellation()
    x = rng.standard_normal(9000) + 1j * rng.standard_normal(9000)
    var = rng.uniform(0.05, 0.5, 9000)
    probs = rng.uniform(0, 1, 360_000)
    img = rng.standard_normal((16, 16, 14, 72)).astype(np.float32)
    cols = rng.standard_normal((16 * 14 * 72, 16 * 9)).astype(np.float32)
    pool_in = rng.standard_normal((32, 32, 90, 36)).astype(np.float32)
    feats = rng.standard_normal((600, 512))
    queries = rng.standard_normal((100, 512))
    idx = np.argsort(rng.uniform(size=(100, 600)), axis=1)[:, :15].astype(np.int64)
    labels_nb = rng.integers(0, 4, 600).astype(np.int64)
    centers = rng.standard_normal((4, 512))
    radii = np.full(4, 30.0)
    return {
        "maxlog_llr (1 frame)": lambda m: m.maxlog_llr(x, var, points, labels),
        "bin_counts (10 frames)": lambda m: m.bin_counts(probs),
        "im2col 3x3": lambda m: m.im2col(img, 3, 3, 1, 1),
        "col2im 3x3": lambda m: m.col2im(cols, img.shape, 3, 3, 1, 1),
        "maxpool 2x2": lambda m: m.maxpool_forward(pool_in, 2, 2),
        "knn_votes k=15": lambda m: m.knn_votes(queries, idx, feats, labels_nb, centers, radii),
    }


def best_time(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("numpy", kernels.python)]
    if kernels.compiled is not None:
        backends.append(("cython", kernels.compiled))
    print(f"{'kernel':<24}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {b: best_time(lambda: fn(mod), args.repeat) * 1e3 for b, mod in backends}
        py = times["numpy"]
        cy = times.get("cython")
        cy_text = f"{cy:12.3f}{py / cy:9.2f}x" if cy is not None else f"{'n/a':>12}{'':>10}"
        print(f"{name:<24}{py:12.3f}{cy_text}")


if __name__ == "__main__":
    main()
