"""Wrong-finalization rate of freshly drawn committees with lying members, per threshold a."""

from __future__ import annotations

import argparse

from xchx.sim.montecarlo import committee_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--w", type=int, default=10)
    ap.add_argument("--a", type=int, nargs="*", default=[5])
    ap.add_argument("--p", type=float, default=0.25)
    ap.add_argument("--lie", type=float, default=1.0, help="lie probability of Byzantine members")
    ap.add_argument("--tallies", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=77)
    args = ap.parse_args()
    print("a,tallies,wrong,escalated,rate,expected,bound_3sigma")
    for a in args.a:
        r = committee_sweep(args.w, a, args.p, args.tallies, args.seed, args.lie)
        exp = "" if r.expected_rate is None else f"{r.expected_rate:.4f}"
        bound = "" if r.expected_rate is None else f"{r.expected_rate + 3 * r.sigma:.4f}"
        print(f"{a},{r.tallies},{r.wrong},{r.escalated},{r.rate:.4f},{exp},{bound}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
