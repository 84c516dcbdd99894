"""Time the compiled SCL kernel against the numpy fallback.

    python benchmarks/bench_scl.py [--n 256 1024] [--lists 1 8] [--reps 20]

Both kernels decode the same noisy words; outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from pufkey.polar import _fallback
from pufkey.polar.core import bsc_llr, construct_frozen_set, frozen_arrays, polar_transform

try:
    from pufkey.polar import _scl
except ImportError:
    _scl = None


def workload(n, reps, p=0.1, seed=0):
    _, frozen = construct_frozen_set(n, p, n // 2, mc_trials=2000, seed=seed)
    mask, values = frozen_arrays(n, frozen)
    g = np.random.default_rng(seed)
    words = []
    for _ in range(reps):
        u = g.integers(0, 2, n, dtype=np.uint8)
        u[frozen] = 0
        y = polar_transform(u) ^ (g.random(n) < p).astype(np.uint8)
        words.append(np.ascontiguousarray(bsc_llr(y, p)))
    return mask, values, words


def timed(kernel, mask, values, words, L):
    t0 = time.perf_counter()
    outs = [np.asarray(kernel(w, mask, values, L)) for w in words]
    return (time.perf_counter() - t0) / len(words), outs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024])
    ap.add_argument("--lists", type=int, nargs="+", default=[1, 8])
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args(argv)
    if _scl is None:
        print("compiled kernel not built; run `pip install --no-build-isolation -e .`")
        return 1
    print(f"{'n':>6} {'L':>3} {'cython ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for n in args.n:
        mask, values, words = workload(n, args.reps)
        for L in args.lists:
            tc, oc = timed(_scl.scl_decode, mask, values, words, L)
            tp, op = timed(_fallback.scl_decode, mask, values, words, L)
            if not all(np.array_equal(a, b) for a, b in zip(oc, op)):
                raise SystemExit(f"kernels disagree at n={n}, L={L}")
            print(f"{n:>6} {L:>3} {1e3 * tc:>10.3f} {1e3 * tp:>10.3f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
