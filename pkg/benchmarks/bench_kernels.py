"""Time the compiled and numpy trial kernels on identical inputs.

    python3 benchmarks/bench_kernels.py --n 1000000 --repeat 5
"""
import argparse
import math
import time

import numpy as np

from bellsim import kernels
from bellsim.correlate import sample_trials
from bellsim.detector import make_array


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000, help="trials per call")
    ap.add_argument("--M", type=int, default=16, help="internal states per detector")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    dets = make_array(1, args.M, "gibbs:2")
    results = {}
    for name in kernels.available_backends():
        t, batch = best_of(
            lambda: sample_trials(0.0, math.pi / 8, dets, args.n, 12345, backend=name), args.repeat
        )
        results[name] = (t, batch)
        print(f"{name:>7}: {t * 1e3:9.2f} ms  {args.n / t / 1e6:7.2f} Mtrials/s")

    if len(results) == 2:
        (tc, bc), (tp, bp) = results["cython"], results["python"]
        same = np.array_equal(bc.bits, bp.bits) and np.array_equal(bc.internal, bp.internal)
        print(f"speedup: {tp / tc:.2f}x  identical output: {same}")
        return 0 if same else 1
    print("compiled kernels not built; only the numpy backend was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
