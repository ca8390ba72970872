from __future__ import annotations

import json
from pathlib import Path

import pytest

from xchx.contracts import IntermediaryRecord, Party, SessionConfig, TradeIntent, TransactionContract, deploy
from xchx.gas import GasLedger
from xchx.ledger import ChainConfig, Ledger

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

ACCEPTANCE: dict = {}


def scenario_dict(name: str) -> dict:
    return json.loads((SCENARIOS / f"{name}.json").read_text())


class Market:
    """Ether + two coin chains with C1 and C2 registered at the given rates."""

    def __init__(self, payers=None, payees=("B",), rate_in=1, rate_out=1, ether=1000, config=None):
        payers = payers or {"A": 100}
        self.ether = Ledger(ChainConfig("ETH", 15, 1, {"C1": ether, "C2": ether}))
        self.btc = Ledger(ChainConfig("BTC", 60, 6, dict(payers, C1=0)))
        self.ltc = Ledger(ChainConfig("LTC", 60, 6, {"C2": 1000, **{p: 0 for p in payees}}))
        self.gas = GasLedger()
        self.registry, self.tc = deploy(self.ether, self.gas, config or SessionConfig())
        self.registry.register(IntermediaryRecord("C1", {"BTC": "C1"}, {("BTC", "ETH"): rate_in}, genesis=True))
        self.registry.register(IntermediaryRecord("C2", {"LTC": "C2"}, {("ETH", "LTC"): rate_out}, genesis=True))

    def intent(self, payer="A", payee="B", amount=5) -> TradeIntent:
        return TradeIntent(Party.of(payer), Party.of(payee), "BTC", "LTC", amount, "C1", "C2")

    def open(self, *intents, now=0) -> int:
        sid = None
        for it in intents:
            sid = self.tc.prepare(it, now)
        return sid

    def to_transfers(self, sid: int, now=0) -> None:
        """Drive a collecting session through selection and both deposits."""
        tc: TransactionContract = self.tc
        s = tc.session(sid)
        if s.phase.value == "Collecting":
            tc.advance(s.deadlines[s.phase])
        tc.select("C1", sid, now=now)
        tc.select("C2", sid, now=now)
        tc.deposit("C1", sid, s.required_deposit, now)
        tc.deposit("C2", sid, s.required_deposit, now)


@pytest.fixture
def market():
    return Market()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
