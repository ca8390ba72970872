"""
Account-based chain simulator.

Each :class:`Ledger` models one independent blockchain (a coin chain or the
ether chain) with a pending pool, block production, confirmation depth and
explicit, adversary-invoked reorgs. Amounts are integers in the chain's
smallest unit and mining rewards are disabled, so the sum of balances on a
chain never changes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, MutableMapping, Optional, Tuple

from .errors import ConfigError, InsufficientFunds, LedgerError, StaleNonce

DEFAULT_DECIMALS = 8


@dataclass(frozen=True)
class ChainConfig:
    chain_id: str
    block_interval: float
    confirmation_depth_default: int = 6
    initial_balances: Mapping[str, int] = field(default_factory=dict)
    decimals: int = DEFAULT_DECIMALS

    def __post_init__(self):
        if not self.chain_id:
            raise ConfigError("chain_id must be non-empty")
        if not self.block_interval > 0:
            raise ConfigError(f"{self.chain_id}: block_interval must be > 0")
        if self.confirmation_depth_default < 1:
            raise ConfigError(f"{self.chain_id}: confirmation_depth_default must be >= 1")
        for account, amount in self.initial_balances.items():
            if not isinstance(amount, int) or isinstance(amount, bool) or amount < 0:
                raise ConfigError(f"{self.chain_id}: initial balance of {account!r} must be a non-negative integer")

    def units(self, whole) -> int:
        """Scale a human amount (e.g. ``"0.5"``) to smallest units."""
        from decimal import Decimal

        scaled = Decimal(str(whole)) * (Decimal(10) ** self.decimals)
        if scaled != scaled.to_integral_value():
            raise ValueError(f"{whole} has more than {self.decimals} decimals")
        return int(scaled)


@dataclass(frozen=True)
class Transfer:
    tx_id: str
    sender: str
    recipient: str
    amount: int
    nonce: int


@dataclass(frozen=True)
class Block:
    height: int
    parent: Optional[str]
    transfers: Tuple[Transfer, ...] = ()
    fork: int = 0

    @property
    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.parent}|{self.height}|{self.fork}|".encode())
        h.update(",".join(t.tx_id for t in self.transfers).encode())
        return h.hexdigest()


class Ledger:
    """State of one simulated chain: canonical blocks, pending pool, balances."""

    def __init__(self, config: ChainConfig):
        self.config = config
        self.chain: List[Block] = [Block(height=0, parent=None)]
        self.pending: List[Transfer] = []
        self.dropped: Dict[str, Transfer] = {}
        self.balances: Dict[str, int] = {a: v for a, v in config.initial_balances.items()}
        self._supply = sum(self.balances.values())
        self._tx_height: Dict[str, int] = {}
        self._next_included_nonce: Dict[str, int] = {}
        self._known: Dict[str, Transfer] = {}
        self._seq = 0
        self._forks = 0

    @property
    def chain_id(self) -> str:
        return self.config.chain_id

    @property
    def height(self) -> int:
        return len(self.chain) - 1

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    @property
    def total_supply(self) -> int:
        return self._supply

    def balance(self, account: str) -> int:
        return self.balances.get(account, 0)

    def pending_outflow(self, account: str) -> int:
        return sum(t.amount for t in self.pending if t.sender == account)

    def spendable(self, account: str) -> int:
        return self.balance(account) - self.pending_outflow(account)

    def next_nonce(self, sender: str) -> int:
        base = self._next_included_nonce.get(sender, 0)
        return base + sum(1 for t in self.pending if t.sender == sender)

    def new_transfer(self, sender: str, recipient: str, amount: int, nonce: Optional[int] = None) -> Transfer:
        """Build a transfer with a fresh chain-unique id. Does not submit it."""
        self._seq += 1
        if nonce is None:
            nonce = self.next_nonce(sender)
        return Transfer(f"{self.chain_id}-{self._seq}", sender, recipient, amount, nonce)

    def submit_transfer(self, t: Transfer) -> str:
        if t.amount <= 0:
            raise LedgerError(f"{t.tx_id}: amount must be positive")
        if t.tx_id in self._known:
            raise LedgerError(f"{t.tx_id}: duplicate tx_id")
        if t.nonce != self.next_nonce(t.sender):
            raise StaleNonce(f"{t.tx_id}: nonce {t.nonce} is not next ({self.next_nonce(t.sender)}) for {t.sender}")
        if self.spendable(t.sender) < t.amount:
            raise InsufficientFunds(f"{t.tx_id}: {t.sender} cannot spend {t.amount}")
        self.pending.append(t)
        self._known[t.tx_id] = t
        return t.tx_id

    def transfer(self, sender: str, recipient: str, amount: int) -> str:
        return self.submit_transfer(self.new_transfer(sender, recipient, amount))

    def mine_block(self) -> Block:
        included: List[Transfer] = []
        for t in self.pending:
            if (t.nonce == self._next_included_nonce.get(t.sender, 0)
                    and self.balance(t.sender) >= t.amount):
                self._apply(self.balances, self._next_included_nonce, t)
                included.append(t)
            else:
                self.dropped[t.tx_id] = t
        self.pending = []
        block = Block(self.height + 1, self.tip.hash, tuple(included), self._forks)
        self.chain.append(block)
        for t in included:
            self._tx_height[t.tx_id] = block.height
        return block

    def execute(self, sender: str, recipient: str, amount: int) -> Transfer:
        """Submit and immediately mine a transfer (native contract execution)."""
        t = self.new_transfer(sender, recipient, amount)
        self.submit_transfer(t)
        self.mine_block()
        if t.tx_id not in self._tx_height:
            raise LedgerError(f"{t.tx_id}: not included")
        return t

    def reorg(self, depth: int, replacement: Iterable[Transfer] = ()) -> List[Transfer]:
        """Replace the top ``depth`` blocks; return the transfers knocked out.

        All replacement transfers go in the first replacement block, the rest
        are empty. Knocked-out transfers are moved to the dropped set and do
        not re-enter the pending pool.
        """
        if depth < 1:
            raise LedgerError("reorg depth must be >= 1")
        if depth > self.height:
            raise LedgerError(f"reorg depth {depth} exceeds height {self.height}")
        replacement = list(replacement)
        kept = self.chain[:-depth]
        removed = self.chain[-depth:]
        balances, nonces = self._replay(kept)
        kept_ids = {t.tx_id for b in kept for t in b.transfers}
        removed_ids = {t.tx_id for b in removed for t in b.transfers}
        seen = set()
        for t in replacement:
            if t.amount <= 0 or t.tx_id in kept_ids or t.tx_id in seen:
                raise LedgerError(f"replacement {t.tx_id} is invalid")
            if t.tx_id in self._known and t.tx_id not in removed_ids and self._known[t.tx_id] != t:
                raise LedgerError(f"replacement {t.tx_id} reuses an existing id")
            if t.nonce != nonces.get(t.sender, 0) or balances.get(t.sender, 0) < t.amount:
                raise LedgerError(f"replacement {t.tx_id} is invalid against the rewound state")
            self._apply(balances, nonces, t)
            seen.add(t.tx_id)

        self._forks += 1
        self.chain = kept
        self.balances = balances
        self._next_included_nonce = nonces
        dropped = []
        for b in removed:
            for t in b.transfers:
                del self._tx_height[t.tx_id]
                if t.tx_id not in seen:
                    self.dropped[t.tx_id] = t
                    dropped.append(t)
        for i in range(depth):
            txs = tuple(replacement) if i == 0 else ()
            block = Block(self.height + 1, self.tip.hash, txs, self._forks)
            self.chain.append(block)
            for t in txs:
                self._tx_height[t.tx_id] = block.height
                self._known[t.tx_id] = t
                self.dropped.pop(t.tx_id, None)
        self._revalidate_pending()
        return dropped

    def confirmation_depth(self, tx_id: str) -> Optional[int]:
        h = self._tx_height.get(tx_id)
        if h is None:
            return None
        return self.height - h + 1

    def canonical_transfer(self, tx_id: str) -> Optional[Transfer]:
        h = self._tx_height.get(tx_id)
        if h is None:
            return None
        return self._known[tx_id]

    def get_transfer(self, tx_id: str) -> Optional[Transfer]:
        return self._known.get(tx_id)

    def included_transfers(self) -> Iterable[Transfer]:
        for b in self.chain:
            yield from b.transfers

    # -- internals

    @staticmethod
    def _apply(balances: MutableMapping[str, int], nonces: MutableMapping[str, int], t: Transfer) -> None:
        balances[t.sender] = balances.get(t.sender, 0) - t.amount
        balances[t.recipient] = balances.get(t.recipient, 0) + t.amount
        nonces[t.sender] = t.nonce + 1

    def _replay(self, blocks: Iterable[Block]) -> Tuple[Dict[str, int], Dict[str, int]]:
        balances = dict(self.config.initial_balances)
        nonces: Dict[str, int] = {}
        for b in blocks:
            for t in b.transfers:
                self._apply(balances, nonces, t)
        return balances, nonces

    def _revalidate_pending(self) -> None:
        old, self.pending = self.pending, []
        for t in old:
            if t.tx_id in self._tx_height:
                continue
            if t.nonce == self.next_nonce(t.sender) and self.spendable(t.sender) >= t.amount:
                self.pending.append(t)
            else:
                self.dropped[t.tx_id] = t


def create_chain(config: ChainConfig, chains: Optional[MutableMapping[str, Ledger]] = None) -> Ledger:
    """Create a genesis-only ledger, registering it in ``chains`` if given."""
    if chains is not None and config.chain_id in chains:
        raise ConfigError(f"duplicate chain_id {config.chain_id!r}")
    ledger = Ledger(config)
    if chains is not None:
        chains[config.chain_id] = ledger
    return ledger
