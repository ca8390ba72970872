from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xchx.errors import ConfigError, InsufficientFunds, LedgerError, StaleNonce
from xchx.ledger import ChainConfig, Ledger, create_chain


def chain(**balances):
    return Ledger(ChainConfig("BTC", 60, 6, balances))


def fold(ledger):
    """Independent replay: apply every canonical transfer to the genesis balances."""
    bal = dict(ledger.config.initial_balances)
    for block in ledger.chain:
        for t in block.transfers:
            bal[t.sender] = bal.get(t.sender, 0) - t.amount
            bal[t.recipient] = bal.get(t.recipient, 0) + t.amount
    return {k: v for k, v in bal.items() if v}


def nonzero(d):
    return {k: v for k, v in d.items() if v}


def test_genesis():
    led = create_chain(ChainConfig("BTC", 60, 6, {"A": 100, "C1": 0}))
    assert led.balance("A") == 100
    assert led.height == 0
    assert led.pending == []
    assert led.tip.parent is None


def test_negative_balance_rejected():
    with pytest.raises(ConfigError):
        ChainConfig("BTC", 60, 6, {"A": -1})


@pytest.mark.parametrize("kwargs", [{"block_interval": 0}, {"block_interval": 60, "confirmation_depth_default": 0}])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        ChainConfig("BTC", **kwargs)


def test_duplicate_chain_id():
    chains = {}
    create_chain(ChainConfig("BTC", 60), chains)
    with pytest.raises(ConfigError):
        create_chain(ChainConfig("BTC", 30), chains)


def test_submit_goes_to_pending():
    led = chain(A=100)
    led.transfer("A", "C1", 5)
    assert len(led.pending) == 1
    assert led.balance("A") == 100


def test_overdraft_counts_pending_outflow():
    led = chain(A=100)
    led.transfer("A", "C1", 100)
    with pytest.raises(InsufficientFunds):
        led.transfer("A", "C1", 1)


def test_same_nonce_double_spend_rejected():
    led = chain(A=100)
    first = led.new_transfer("A", "C1", 60, nonce=0)
    second = led.new_transfer("A", "M", 60, nonce=0)
    led.submit_transfer(first)
    with pytest.raises(StaleNonce):
        led.submit_transfer(second)


@pytest.mark.parametrize("amount", [0, -3])
def test_non_positive_amount(amount):
    with pytest.raises(LedgerError):
        chain(A=100).transfer("A", "C1", amount)


def test_duplicate_tx_id():
    led = chain(A=100)
    t = led.new_transfer("A", "C1", 1)
    led.submit_transfer(t)
    with pytest.raises(LedgerError):
        led.submit_transfer(t)


def test_mine_applies_pending():
    led = chain(A=100)
    led.transfer("A", "C1", 5)
    led.mine_block()
    assert led.height == 1
    assert (led.balance("A"), led.balance("C1")) == (95, 5)
    assert led.pending == []


def test_empty_block():
    led = chain(A=100)
    led.mine_block()
    assert led.height == 1
    assert led.tip.transfers == ()
    assert led.balance("A") == 100


def test_block_links():
    led = chain(A=100)
    for _ in range(3):
        led.mine_block()
    for parent, child in zip(led.chain, led.chain[1:]):
        assert child.height == parent.height + 1
        assert child.parent == parent.hash


def test_depth_six_after_five_more_blocks():
    led = chain(A=100)
    tx = led.transfer("A", "C1", 5)
    assert led.confirmation_depth(tx) is None
    led.mine_block()
    for _ in range(5):
        led.mine_block()
    assert led.confirmation_depth(tx) == 6


def test_unknown_tx_and_account():
    led = chain(A=100)
    assert led.confirmation_depth("nope") is None
    assert led.balance("nobody") == 0


def test_reorg_replaces_payment():
    led = chain(A=100)
    pay = led.transfer("A", "C1", 5)
    led.mine_block()
    led.mine_block()
    led.mine_block()
    assert led.confirmation_depth(pay) == 3
    alt = led.new_transfer("A", "Mallory", 5, nonce=0)
    dropped = led.reorg(3, [alt])
    assert [t.tx_id for t in dropped] == [pay]
    assert led.confirmation_depth(pay) is None
    assert pay in led.dropped
    assert pay not in {t.tx_id for t in led.pending}
    assert led.balance("C1") == 0
    assert led.balance("Mallory") == 5
    assert led.height == 3
    assert nonzero(led.balances) == fold(led)


@pytest.mark.parametrize("depth", [0, 4])
def test_reorg_depth_bounds(depth):
    led = chain(A=100)
    for _ in range(3):
        led.mine_block()
    with pytest.raises(LedgerError):
        led.reorg(depth)


def test_invalid_replacement_leaves_ledger_unchanged():
    led = chain(A=10)
    led.transfer("A", "C1", 5)
    led.mine_block()
    led.mine_block()
    before = (led.tip.hash, dict(led.balances), list(led.chain))
    bad = led.new_transfer("A", "M", 50, nonce=0)
    with pytest.raises(LedgerError):
        led.reorg(2, [bad])
    assert (led.tip.hash, dict(led.balances), list(led.chain)) == before


def test_pending_that_becomes_canonical_is_not_dropped():
    led = chain(A=10)
    t = led.new_transfer("A", "C1", 5)
    led.submit_transfer(t)
    led.mine_block()
    led.reorg(1, [t])
    assert led.confirmation_depth(t.tx_id) == 1
    assert t.tx_id not in led.dropped


ACCOUNTS = ["A", "B", "C", "D"]
ops = st.lists(
    st.one_of(
        st.tuples(st.just("send"), st.sampled_from(ACCOUNTS), st.sampled_from(ACCOUNTS), st.integers(1, 40)),
        st.tuples(st.just("mine")),
        st.tuples(st.just("reorg"), st.integers(1, 4), st.sampled_from(ACCOUNTS), st.integers(1, 40)),
    ),
    max_size=40,
)


@settings(max_examples=150, deadline=None)
@given(ops)
def test_random_histories_keep_ledger_invariants(history):
    led = Ledger(ChainConfig("X", 1, 6, {"A": 50, "B": 30, "C": 20}))
    supply = led.total_supply
    for op in history:
        if op[0] == "send":
            try:
                led.transfer(op[1], op[2], op[3])
            except LedgerError:
                pass
        elif op[0] == "mine":
            led.mine_block()
        else:
            _, depth, sender, amount = op
            deep = {t.tx_id for t in led.included_transfers() if led.confirmation_depth(t.tx_id) > depth}
            alt = led.new_transfer(sender, "Z", amount, nonce=0)
            try:
                led.reorg(depth, [alt])
            except LedgerError:
                continue
            # a reorg of depth d never removes anything buried deeper than d
            assert all(led.confirmation_depth(tx) is not None for tx in deep)
        assert sum(led.balances.values()) == supply
        assert nonzero(led.balances) == fold(led)
        assert all(v >= 0 for v in led.balances.values())
    seen = {}
    for t in led.included_transfers():
        assert t.nonce == seen.get(t.sender, 0)
        seen[t.sender] = t.nonce + 1
