from __future__ import annotations

import json
from decimal import Decimal

import pytest

from xchx.errors import ConfigError
from xchx.gas import DEFAULT_GAS_TABLE, GasLedger, load_gas_table, truncate_cents, validate_gas_table

PUBLISHED_USD = {
    "Deploy": "1.43", "TC.Prepare": "0.15", "IC.Register": "0.07", "IC.Verify_PoW": "0.07",
    "TC.Validation": "0.06", "IC.Update": "0.03", "TC.Deposit": "0.01",
}


@pytest.mark.parametrize("op", sorted(PUBLISHED_USD))
def test_usd_column(op):
    g = GasLedger()
    assert truncate_cents(g.cost_usd(op)) == Decimal(PUBLISHED_USD[op])
    assert abs(g.cost_usd(op) - Decimal(PUBLISHED_USD[op])) < Decimal("0.01")


def test_exact_usd_formula():
    g = GasLedger()
    assert g.cost_usd("Deploy") == Decimal(3690283) * Decimal("0.000000003") * 130
    assert g.cost_usd("Deploy") == Decimal("1.43921037")


def test_charges_and_report():
    g = GasLedger()
    assert g.report() == []
    g.charge("C1", "IC.Register")
    g.charge("A", "TC.Prepare")
    g.charge("C1", "IC.Update")
    assert g.total_gas() == 181591 + 398525 + 80995
    assert [r[1] for r in g.report("C1")] == ["IC.Register", "IC.Update"]
    assert g.gas_by_caller() == {"C1": 181591 + 80995, "A": 398525}
    assert g.call_counts()["IC.Register"] == 1


def test_unknown_op_charge():
    with pytest.raises(KeyError):
        GasLedger().charge("x", "TC.Nope")


def test_overrides(tmp_path):
    table = validate_gas_table({"TC.Deposit": 1})
    assert table["TC.Deposit"] == 1 and table["Deploy"] == DEFAULT_GAS_TABLE["Deploy"]
    with pytest.raises(ConfigError, match="TC.Nope"):
        validate_gas_table({"TC.Nope": 1})
    with pytest.raises(ConfigError):
        validate_gas_table({"Deploy": -1})
    p = tmp_path / "gas.json"
    p.write_text(json.dumps({"IC.Update": 7}))
    assert load_gas_table(p)["IC.Update"] == 7
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_gas_table(p)
