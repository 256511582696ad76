"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--batch 128] [--hidden 128] [--min-time 0.3]

Prints ops/s per operation and backend, then the compiled/numpy speedup for
every operation measured on both.
"""

import argparse
from collections import defaultdict

from threadpoolctl import threadpool_limits

from orpt import bench, kernels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--min-time", type=float, default=0.3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    print(f"backends available: {', '.join(sorted(kernels.BACKENDS))} (default {kernels.BACKEND})")
    with threadpool_limits(args.threads):
        rows = bench.run(batch=args.batch, hidden=args.hidden, min_time=args.min_time)

    width = max(len(op) for op, _, _ in rows)
    by_op = defaultdict(dict)
    for op, backend, rate in rows:
        by_op[op][backend] = rate
        print(f"{op:<{width}}  {backend:<7} {rate:14.1f} ops/s")

    paired = {op: r for op, r in by_op.items() if "cython" in r and "python" in r}
    if not paired:
        print("\ncompiled extension not built; nothing to compare")
        return
    print("\nspeedup (compiled / numpy)")
    for op, r in paired.items():
        print(f"{op:<{width}}  {r['cython'] / r['python']:6.2f}x")


if __name__ == "__main__":
    main()
