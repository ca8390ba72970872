"""Empirical P[X <= c] over sampled committees against the exact binomial value."""

from __future__ import annotations

import argparse
import math
import time
from fractions import Fraction

from xchx.analysis import binomial_cdf
from xchx.sim.montecarlo import byzantine_counts, empirical_cdf


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--w", type=int, default=10)
    ap.add_argument("--c", type=int, default=4)
    ap.add_argument("--p", type=float, default=0.25)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    t0 = time.perf_counter()
    est = empirical_cdf(byzantine_counts(args.w, args.p, args.trials, args.seed), args.c)
    exact = float(binomial_cdf(args.w, args.c, Fraction(repr(args.p))))
    sigma = math.sqrt(exact * (1 - exact) / args.trials)
    print(f"w={args.w} c={args.c} p={args.p} trials={args.trials}")
    print(f"empirical={est:.5f} exact={exact:.5f} diff={est - exact:+.5f} sigma={sigma:.5f} "
          f"({time.perf_counter() - t0:.2f}s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
