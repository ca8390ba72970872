"""Write the safety grid next to the published values and list the disagreeing cells."""

from __future__ import annotations

import argparse
import sys

from xchx.analysis import fixed, reproduce_table3, table3_csv


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", default="1/4", help="per-member Byzantine probability")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cells, flagged = reproduce_table3(args.p)
    text = table3_csv(cells)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"{len(flagged)} of {len(cells)} cells differ by more than 5e-4:", file=sys.stderr)
    for c in flagged:
        print(f"  t={c.t} w={c.w}: {fixed(c.probability, 4)} vs {fixed(c.published, 4)}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
