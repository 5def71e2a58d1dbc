"""Compare the compiled and pure-numpy kernel paths.

Usage: python3 benchmarks/bench_kernels.py [--batch N] [--members L] [--dim D]

Times each kernel under both backends (after a warmup call so jit
compilation is excluded) and prints the per-call speedup.
"""

import argparse
import time

import numpy as np

from metric_rec import kernels


def time_call(fn, args, repeats=50):
    fn(*args)  # warmup / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=4096)
    parser.add_argument("--members", type=int, default=20)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n, l, d = args.batch, args.members, args.dim
    b = rng.normal(size=d)
    x = rng.normal(size=(n, d))
    y = rng.normal(size=(n, d))
    q = rng.normal(size=(n, d))
    m = rng.normal(size=(n, l, d))
    dout_rows = rng.normal(size=n)
    dout_members = rng.normal(size=(n, l))

    inputs = {
        "sqdist_rows": (b, x, y),
        "sqdist_rows_backward": (b, x, y, dout_rows),
        "sqdist_members": (b, q, m),
        "sqdist_members_backward": (b, q, m, dout_members),
        "dot_members": (q, m),
        "dot_members_backward": (q, m, dout_members),
    }

    if not kernels.NUMBA_KERNELS:
        print("numba is not available; timing the numpy path only")

    print(f"batch={n} members={l} dim={d} repeats={args.repeats}")
    header = f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, call_args in inputs.items():
        t_np = time_call(kernels.NUMPY_KERNELS[name], call_args, args.repeats)
        if kernels.NUMBA_KERNELS:
            t_nb = time_call(kernels.NUMBA_KERNELS[name], call_args, args.repeats)
            print(f"{name:<28} {t_np * 1e3:>8.3f}ms {t_nb * 1e3:>8.3f}ms "
                  f"{t_np / t_nb:>7.2f}x")
        else:
            print(f"{name:<28} {t_np * 1e3:>8.3f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
