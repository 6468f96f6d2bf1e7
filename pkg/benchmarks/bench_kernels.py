"""Compiled versus NumPy inner kernel, and whole solves on each backend.

Run ``python benchmarks/bench_kernels.py [--n 256] [--repeat 200]``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bidirelay import kernels as K
from bidirelay.channel import ChannelConfig, generate_channels
from bidirelay.solver.core import SolverOptions, initial_center, solve
from bidirelay.types import ACTIVE_ROLES, ProblemInstance


def best_of(fn, repeat: int) -> float:
    """Smallest wall time of ``repeat`` calls, in seconds."""
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--n", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--solves", type=int, default=3)
    args = parser.parse_args(argv)

    inst = ProblemInstance(generate_channels(ChannelConfig(n_subcarriers=args.n, seed=1)),
                           1.0, 1.0, 5.0, 5.0, 100.0, 100.0, 100.0)
    x = initial_center(inst)
    mask = K.role_mask(ACTIVE_ROLES, inst.n)
    gains = inst.channels.array

    print(f"inner_maximize, N={args.n} (best of {args.repeat})")
    timings = {}
    for backend in sorted(K.BACKENDS):
        timings[backend] = best_of(
            lambda b=backend: K.inner_maximize(gains, x, inst.weights, mask, b), args.repeat)
        print(f"  {backend:9s} {timings[backend] * 1e6:10.1f} us")
    if "compiled" in timings:
        ref = K.inner_maximize(gains, x, inst.weights, mask, "python")
        got = K.inner_maximize(gains, x, inst.weights, mask, "compiled")
        same = np.array_equal(ref[0], got[0])
        print(f"  speed-up  {timings['python'] / timings['compiled']:10.1f} x"
              f"   (same roles: {same}, max sum diff {np.max(np.abs(ref[3] - got[3])):.2e})")
    else:
        print("  compiled extension not built; run `python setup.py build_ext --inplace`")

    print(f"full solve, N={args.n}, r=5, 20 dB (mean of {args.solves})")
    for backend in sorted(K.BACKENDS):
        t0 = time.perf_counter()
        for seed in range(args.solves):
            ch = generate_channels(ChannelConfig(n_subcarriers=args.n, seed=seed))
            solve(ProblemInstance(ch, 1, 1, 5, 5, 100, 100, 100), SolverOptions(backend=backend))
        print(f"  {backend:9s} {(time.perf_counter() - t0) / args.solves * 1e3:10.1f} ms")


if __name__ == "__main__":
    main()
