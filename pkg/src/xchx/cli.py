"""``xchx`` command line: run | analyze | table3 | costs.

Exit codes are 0 on success, 1 when a run trips an internal invariant, and
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

from .analysis import SafetyQuery, committee_confidence, fixed, reproduce_table3, table3_csv
from .errors import ConfigError, InvariantViolation, XchxError
from .gas import DEFAULT_GAS_PRICE, DEFAULT_USD_PER_ETHER, truncate_cents
from .sim.engine import run
from .sim.scenario import load_scenario_file

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"xchx: {msg}", file=sys.stderr)


def _decimal(text: str) -> Decimal:
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal: {text!r}") from None
    if not d.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite decimal: {text!r}")
    return d


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xchx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario; write trace and metrics")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("analyze", help="committee safety probability")
    p.add_argument("--w", required=True, type=int)
    p.add_argument("--t", required=True, type=_fraction)
    p.add_argument("--p", type=_fraction, default=Fraction(1, 4))

    p = sub.add_parser("table3", help="safety grid versus the published values")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("costs", help="itemized gas and USD for one scenario run")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--usd-per-eth", type=_decimal, default=DEFAULT_USD_PER_ETHER)
    p.add_argument("--gas-price", type=_decimal, default=DEFAULT_GAS_PRICE)
    return parser


def cmd_run(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    result = run(scenario, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "trace.jsonl").write_text(result.trace.jsonl())
    metrics_path = args.out / f"metrics.{args.format}"
    m = result.metrics
    metrics_path.write_text(m.to_json() if args.format == "json" else m.to_csv())
    print(f"trace {result.trace_hash} events={len(result.trace)}")
    print(f"settled={m.sessions_settled} aborted={m.sessions_aborted} forfeitures={m.escrow_forfeitures} "
          f"wrong_finalizations={m.wrong_finalizations} conservation_checks_passed={m.conservation_checks_passed}")
    print(f"metrics written to {metrics_path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        q = SafetyQuery(args.w, args.t, args.p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = committee_confidence(q)
    print(f"c={res.c} P={res.decimal}")
    return EXIT_OK


def cmd_table3(args) -> int:
    cells, flagged = reproduce_table3()
    text = table3_csv(cells)
    if args.out is None:
        sys.stdout.write(text)
    else:
        try:
            args.out.write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc}") from exc
    for c in flagged:
        print(f"discrepancy t={c.t} w={c.w} computed={fixed(c.probability, 4)} "
              f"published={fixed(c.published, 4)} delta={fixed(c.delta, 4)}", file=sys.stderr)
    return EXIT_OK


def cmd_costs(args) -> int:
    scenario = load_scenario_file(args.scenario)
    result = run(scenario, args.seed, gas_price=args.gas_price, usd_per_ether=args.usd_per_eth)
    gas = result.engine.gas
    counts = gas.call_counts()
    print(f"{'operation':<14} {'calls':>6} {'gas/call':>9} {'gas':>11} {'usd/call':>9} {'usd':>10}")
    for op in gas.table:
        n = counts.get(op, 0)
        if not n:
            continue
        unit = gas.table[op]
        print(f"{op:<14} {n:>6} {unit:>9} {n * unit:>11} {truncate_cents(gas.cost_usd(op)):>9} "
              f"{gas.usd(n * unit).quantize(Decimal('0.0001')):>10}")
    total = gas.total_gas()
    print(f"{'TOTAL':<14} {sum(counts.values()):>6} {'':>9} {total:>11} {'':>9} "
          f"{gas.usd(total).quantize(Decimal('0.0001')):>10}")
    print()
    print(f"{'caller':<14} {'gas':>11} {'usd':>10}")
    for caller, g in sorted(gas.gas_by_caller().items()):
        print(f"{caller:<14} {g:>11} {gas.usd(g).quantize(Decimal('0.0001')):>10}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "table3": cmd_table3, "costs": cmd_costs}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        _err(str(exc))
        return EXIT_INVARIANT
    except (ConfigError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except XchxError as exc:
        # anything else escaping a run means module state can no longer be trusted
        _err(f"run aborted: {exc}")
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
