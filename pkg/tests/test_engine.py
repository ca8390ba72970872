from __future__ import annotations

import copy
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SCENARIOS, scenario_dict
from xchx.contracts import TransactionContract
from xchx.errors import InvariantViolation
from xchx.sim import collect_metrics, run
from xchx.sim.engine import solve_time_sample, substream
from xchx.sim.scenario import load_scenario_file, scenario_from_dict

ALL = sorted(p.stem for p in SCENARIOS.glob("*.json"))


def go(name, seed=None, mutate=None, **kw):
    d = scenario_dict(name)
    if mutate:
        mutate(d)
    return run(scenario_from_dict(d), seed, **kw)


# -- latency model and rng streams


def test_solve_time_mean():
    rng = substream(1, "V0")
    xs = [solve_time_sample(2 ** 255, 1 / 300, rng) for _ in range(10_000)]
    assert abs(statistics.fmean(xs) - 600) < 0.05 * 600


def test_solve_time_zero_target_never_finishes():
    assert solve_time_sample(0, 1.0, substream(1, "V0")) == float("inf")


def test_solve_time_needs_hash_rate():
    with pytest.raises(ValueError):
        solve_time_sample(2 ** 255, 0, substream(1, "V0"))


def test_substreams_independent_and_repeatable():
    a1, b1 = substream(9, "V0"), substream(9, "V1")
    a2 = substream(9, "V0")
    xs = [solve_time_sample(2 ** 255, 1 / 300, a1) for _ in range(5)]
    ys = [solve_time_sample(2 ** 255, 1 / 300, b1) for _ in range(5)]
    assert xs != ys
    assert xs == [solve_time_sample(2 ** 255, 1 / 300, a2) for _ in range(5)]


# -- scripted behaviours


def test_honest_run():
    r = go("honest")
    m = r.metrics
    assert (m.sessions_settled, m.sessions_aborted, m.wrong_finalizations) == (1, 0, 0)
    led = r.engine.ledgers
    assert (led["BTC"].balance("A"), led["BTC"].balance("C1")) == (95, 5)
    assert (led["LTC"].balance("C2"), led["LTC"].balance("B")) == (95, 5)
    assert (led["ETH"].balance("C1"), led["ETH"].balance("C2")) == (995, 1005)
    assert led["ETH"].balance("TC") == 0 and led["ETH"].balance("IC") == 0


def test_honest_validators_vote_confirmed_at_depth():
    r = go("honest")
    tally = r.trace.of("tally")[0]
    assert tally.payload["verdict"] == "Confirmed"
    tx = r.trace.of("pay")[0].payload["tx_id"]
    assert r.engine.ledgers["BTC"].confirmation_depth(tx) >= 6


def test_false_claim_fails():
    r = go("payer_silent")
    assert [e.payload["verdict"] for e in r.trace.of("tally")] == ["Failed"]
    assert r.metrics.sessions_aborted == 1
    assert r.engine.ether.balance("C1") == r.engine.ether.balance("C2") == 1000


def test_byzantine_lie_probability_one_always_inverts():
    r = go("byzantine")
    liars = {"V0", "V1", "V2"}
    honest = {e.payload["ref"]: e.payload["verdict"] for e in r.trace.of("vote") if e.actor == "V3"}
    for e in r.trace.of("vote"):
        if e.actor in liars and e.payload["ref"] in honest:
            assert e.payload["verdict"] != honest[e.payload["ref"]]
    assert r.metrics.slashings == 3 and r.metrics.wrong_finalizations == 0
    assert r.engine.ether.balance("treasury") == 2


def test_double_spend_depth_three_is_failed():
    r = go("double_spend")
    reorg = r.trace.of("reorg")[0].payload
    assert reorg["depth"] == 3 and reorg["dropped"]
    assert [e.payload["verdict"] for e in r.trace.of("tally")] == ["Failed"]
    assert r.metrics.wrong_confirmed == 0


def test_c2_absconds_forfeits():
    r = go("c2_absconds")
    assert r.metrics.escrow_forfeitures == 1
    assert r.engine.ether.balance("B") == 5


def test_sybil_intents_never_reach_deposits():
    r = go("sybil")
    s = r.engine.tc.session(0)
    sybil = [i for i, it in enumerate(s.intents) if it.payer.name.startswith("S#")]
    assert sybil
    assert all(i not in s.slices for i in sybil)
    assert s.required_deposit == 5
    deposits = [e.payload["amount"] for e in r.trace.of("escrow") if e.payload["kind"] == "deposit"]
    assert deposits == [5, 5]


def test_false_denial_does_not_change_outcome():
    r = go("false_denial")
    assert r.metrics.sessions_settled == 1 and r.metrics.escrow_forfeitures == 0
    assert r.trace.of("deny")


def test_rate_update_applies_to_later_session():
    r = go("rate_update")
    deposits = [(e.payload["session"], e.payload["amount"]) for e in r.trace.of("escrow")
                if e.payload["kind"] == "deposit"]
    assert deposits == [(0, 5), (0, 5), (1, 10), (1, 10)]
    assert r.engine.gas.call_counts()["IC.Update"] == 1


def test_multi_partial():
    r = go("multi_partial")
    s = r.engine.tc.session(0)
    assert s.total == 4 and s.amount_B == {"B1": 1, "B3": 3}
    fwd = [e.payload["amount"] for e in r.trace.of("escrow") if e.payload["kind"] == "forward_c1_to_c2"]
    assert fwd == [4]


def test_empty_scenario():
    r = go("empty")
    assert r.metrics.gas_total == 0 and r.metrics.sessions_settled == 0


# -- engine-wide properties


@pytest.mark.parametrize("name", ALL)
def test_offline_metrics_equal_online(name):
    r = go(name)
    assert collect_metrics(r.trace) == r.metrics


@pytest.mark.parametrize("name", ALL)
def test_gas_totals_match_table(name):
    r = go(name)
    gas = r.engine.gas
    assert r.metrics.gas_total == sum(gas.table[op] * n for op, n in gas.call_counts().items())


@pytest.mark.parametrize("name", ALL)
def test_supply_constant(name):
    r = go(name)
    for cid, led in r.engine.ledgers.items():
        assert sum(led.balances.values()) == r.engine.supply[cid]


@pytest.mark.parametrize("name", ALL)
def test_committee_never_exceeds_cap(name):
    r = go(name)
    cap = r.engine.scenario.committee.w
    per_epoch = {}
    for e in r.trace.of("admit"):
        per_epoch[e.payload["epoch"]] = per_epoch.get(e.payload["epoch"], 0) + 1
    assert all(n <= cap for n in per_epoch.values())


@pytest.mark.parametrize("name", ALL)
def test_trace_time_ordered(name):
    r = go(name)
    ts = [e.t_ms for e in r.trace]
    assert ts == sorted(ts)


def test_seed_override_changes_hash():
    assert go("honest").trace_hash != go("honest", seed=8).trace_hash


def test_fault_injection_trips_invariant(monkeypatch):
    original = TransactionContract._pay_out

    def leaky(self, s, owner, account, amount, kind):
        # record the payout but skip one unit of the ether movement
        original(self, s, owner, account, amount, kind)
        if kind == "return_c2":
            self.ether.execute(account, self.ESCROW, 1)

    monkeypatch.setattr(TransactionContract, "_pay_out", leaky)
    with pytest.raises(InvariantViolation):
        go("honest")


def _double_spend(depth, seed, k):
    def mutate(d):
        d["chains"][1]["confirmation_depth"] = k
        for a in d["actors"]:
            if a["behavior"] == "DoubleSpendPayer":
                a["params"] = {"reorg_depth": depth}
    return go("double_spend", seed=seed, mutate=mutate)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32))
def test_double_spend_never_confirmed_under_policy(depth, seed):
    r = _double_spend(depth, seed, 6)
    assert r.metrics.wrong_confirmed == 0


def test_double_spend_succeeds_without_policy():
    r = _double_spend(3, 11, 1)
    assert r.metrics.wrong_confirmed >= 1
