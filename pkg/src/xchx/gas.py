"""Gas accounting with the published per-operation costs as defaults."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

from .errors import ConfigError

DEFAULT_GAS_TABLE: Dict[str, int] = {
    "Deploy": 3690283,
    "IC.Register": 181591,
    "IC.Update": 80995,
    "IC.Verify_PoW": 191737,
    "TC.Prepare": 398525,
    "TC.Deposit": 36452,
    "TC.Validation": 163780,
}
OPERATIONS = tuple(DEFAULT_GAS_TABLE)

DEFAULT_GAS_PRICE = Decimal("0.000000003")  # ether per gas
DEFAULT_USD_PER_ETHER = Decimal(130)

CENT = Decimal("0.01")


@dataclass(frozen=True)
class GasCharge:
    caller: str
    op: str
    gas: int


def validate_gas_table(overrides: Mapping[str, object], where: str = "gas_table") -> Dict[str, int]:
    """Check an override mapping and return it merged over the defaults."""
    if not isinstance(overrides, Mapping):
        raise ConfigError(f"{where}: must be an object")
    table = dict(DEFAULT_GAS_TABLE)
    for op, gas in overrides.items():
        if op not in DEFAULT_GAS_TABLE:
            raise ConfigError(f"{where}.{op}: unknown operation (expected one of {', '.join(OPERATIONS)})")
        if not isinstance(gas, int) or isinstance(gas, bool) or gas < 0:
            raise ConfigError(f"{where}.{op}: gas must be a non-negative integer")
        table[op] = gas
    return table


def load_gas_table(path: Union[str, Path]) -> Dict[str, int]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return validate_gas_table(data, where=str(path))


def truncate_cents(usd: Decimal) -> Decimal:
    """Drop sub-cent digits; this is how the published cost column is rendered."""
    return usd.quantize(CENT, rounding=ROUND_DOWN)


@dataclass
class GasLedger:
    table: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_GAS_TABLE))
    gas_price: Decimal = DEFAULT_GAS_PRICE
    usd_per_ether: Decimal = DEFAULT_USD_PER_ETHER
    charges: List[GasCharge] = field(default_factory=list)
    listeners: List[Callable[[GasCharge], None]] = field(default_factory=list, repr=False)

    def charge(self, caller: str, op: str) -> GasCharge:
        if op not in self.table:
            raise KeyError(op)
        c = GasCharge(caller, op, self.table[op])
        self.charges.append(c)
        for listener in self.listeners:
            listener(c)
        return c

    def usd(self, gas: int) -> Decimal:
        return Decimal(gas) * self.gas_price * self.usd_per_ether

    def cost_usd(self, op: str) -> Decimal:
        return self.usd(self.table[op])

    def report(self, caller: Optional[str] = None) -> List[Tuple[str, str, int, Decimal]]:
        return [(c.caller, c.op, c.gas, self.usd(c.gas))
                for c in self.charges if caller is None or c.caller == caller]

    def call_counts(self) -> Counter:
        return Counter(c.op for c in self.charges)

    def gas_by_caller(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for c in self.charges:
            out[c.caller] = out.get(c.caller, 0) + c.gas
        return out

    def total_gas(self) -> int:
        return sum(c.gas for c in self.charges)
