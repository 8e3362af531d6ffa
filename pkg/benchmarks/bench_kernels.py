"""Time the numba-jitted replay kernels against their pure-Python fallbacks.

Run from the repo root:

    python benchmarks/bench_kernels.py

The jitted path is what normal installs use; setting SPECSIM_DISABLE_NUMBA=1
makes the whole package run on the fallback shown here.
"""

import time

import numpy as np

from specsim import _kernels as K
from specsim.trace import BurstySpec, SyntheticSpec, generate_bursty, generate_synthetic

LENGTH = 1_000_000
REPEATS = 5
SEED = 7


def timeit(fn, *args):
    fn(*args)  # warm-up (and JIT compile on the numba path)
    best = float("inf")
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    geo = generate_synthetic(SyntheticSpec(alpha=0.8, cap=20, length=LENGTH, seed=SEED)).positions
    bursty = generate_bursty(
        BurstySpec(burst_prob=0.15, burst_min=8, burst_max=20, cap=20, length=LENGTH, seed=SEED)
    ).positions
    ctx = np.random.default_rng(SEED).integers(0, 6, size=8192).astype(np.int64)

    cases = [
        ("fixed_k_walk", K.fixed_k_walk, K._py_fixed_k_walk, (geo, 4, 0.1, 1.0, 1.0, 0.0)),
        ("oracle_walk", K.oracle_walk, K._py_oracle_walk, (bursty, 0.1, 1.0, 1.0, 0.0)),
        ("combine_walk", K.combine_walk, K._py_combine_walk, (geo, bursty, 0.1, 0.02, 1.0, 1.0, 0.0)),
        ("ngram_match", K.ngram_match, K._py_ngram_match, (ctx, 3, 7, 20, ctx.shape[0])),
    ]

    print(f"numba path enabled: {K.NUMBA_ENABLED}  (trace length {LENGTH:,}, best of {REPEATS})")
    print(f"{'kernel':<14} {'jit/current':>12} {'pure python':>12} {'speedup':>9}")
    for name, current, pure, args in cases:
        t_cur = timeit(current, *args)
        t_py = timeit(pure, *args)
        assert current(*args) == pure(*args) or np.allclose(
            np.asarray(current(*args), dtype=float), np.asarray(pure(*args), dtype=float)
        )
        print(f"{name:<14} {t_cur * 1e3:>10.2f}ms {t_py * 1e3:>10.2f}ms {t_py / t_cur:>8.1f}x")


if __name__ == "__main__":
    main()
