"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--rows 256] [--steps 16384] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from fbmhedge import _pykernels
from fbmhedge.payoff import ConvexPayoff

try:
    from fbmhedge import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rows, steps, seed):
    rng = np.random.default_rng(seed)
    bh = np.cumsum(rng.normal(0.0, steps**-0.75, (rows, steps + 1)), axis=1)
    bh[:, 0] = 0.0
    prices = np.exp(bh)
    straddle = ConvexPayoff.straddle(1.0)
    hedge_args = (np.ascontiguousarray(straddle.locations), np.ascontiguousarray(straddle.cumulative_masses),
                  straddle.base_slope)
    return {
        "crossing_counts": lambda k: k.crossing_counts(bh, 0.0),
        "occupation_steps": lambda k: k.occupation_steps(bh, -0.05, 0.05),
        "hedge_sums stride 1": lambda k: k.hedge_sums(prices, 1, *hedge_args),
        "hedge_sums stride 8": lambda k: k.hedge_sums(prices, 8, *hedge_args),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=256)
    parser.add_argument("--steps", type=int, default=2**14)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    print(f"{args.rows} paths x {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, call in cases(args.rows, args.steps, 0).items():
        py = min(timeit.repeat(lambda: call(_pykernels), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:<22}{py * 1e3:>14.1f}{'n/a':>14}{'n/a':>10}")
            continue
        cy = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:<22}{py * 1e3:>14.1f}{cy * 1e3:>14.1f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
