"""Run the double-spend scenario over reorg depths and seeds, for each confirmation policy k."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from xchx.sim import run, scenario_from_dict

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", type=Path, default=ROOT / "scenarios" / "double_spend.json")
    ap.add_argument("--depths", type=int, nargs="*", default=[1, 2, 3, 4, 5])
    ap.add_argument("--k", type=int, nargs="*", default=[6, 1])
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    base = json.loads(args.scenario.read_text())
    print("k,reorg_depth,runs,wrong_confirmed")
    for k in args.k:
        for depth in args.depths:
            wrong = 0
            for seed in range(1000, 1000 + args.seeds):
                d = json.loads(json.dumps(base))
                d["chains"][1]["confirmation_depth"] = k
                for a in d["actors"]:
                    if a["behavior"] == "DoubleSpendPayer":
                        a["params"] = {"reorg_depth": depth}
                wrong += run(scenario_from_dict(d), seed).metrics.wrong_confirmed
            print(f"{k},{depth},{args.seeds},{wrong}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
