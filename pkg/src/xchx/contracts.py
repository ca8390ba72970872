"""
Intermediary registry (IC) and transaction contract (TC).

A trade session runs through

    Collecting -> AwaitSelection -> AwaitDeposits -> AwaitPayerTransfers
               -> AwaitPayeeTransfers -> Settled

and may drop to Aborted from any non-terminal phase. The one-to-one trade is
simply a session holding a single intent.

Both intermediaries escrow the ether equivalent of the session total. A
failed payer releases its slice back to each intermediary; a failed payee is
compensated from C2's slice; whatever C1 still has escrowed at the end is
forwarded to C2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .errors import ContractError, LedgerError, PhaseError
from .gas import GasLedger
from .ledger import Ledger

MINUTE_MS = 60_000


class Phase(str, enum.Enum):
    COLLECTING = "Collecting"
    AWAIT_SELECTION = "AwaitSelection"
    AWAIT_DEPOSITS = "AwaitDeposits"
    AWAIT_PAYER_TRANSFERS = "AwaitPayerTransfers"
    AWAIT_PAYEE_TRANSFERS = "AwaitPayeeTransfers"
    SETTLED = "Settled"
    ABORTED = "Aborted"

    @property
    def terminal(self) -> bool:
        return self in (Phase.SETTLED, Phase.ABORTED)


class Outcome(str, enum.Enum):
    PENDING = "Pending"
    CONFIRMED = "Confirmed"
    FAILED = "Failed"


@dataclass(frozen=True)
class Party:
    """A trading user: one name, with an account on the ether chain and on a coin chain."""

    name: str
    eth: str
    coin: str

    @classmethod
    def of(cls, name: str) -> "Party":
        return cls(name, name, name)


@dataclass
class IntermediaryRecord:
    eth_address: str
    coin_addresses: Dict[str, str] = field(default_factory=dict)
    rates: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    stake: int = 0
    validation_successes: int = 0
    active: bool = True
    genesis: bool = False

    def __post_init__(self):
        self.rates = {pair: Fraction(r) for pair, r in self.rates.items()}
        self._check()

    def _check(self) -> None:
        if not self.eth_address:
            raise ContractError("eth_address must be non-empty")
        for pair, rate in self.rates.items():
            if rate <= 0:
                raise ContractError(f"rate for {pair} must be > 0")

    @property
    def supported_pairs(self) -> Set[Tuple[str, str]]:
        return set(self.rates)

    @property
    def eligible(self) -> bool:
        # genesis records stand in for the success history no intermediary has at bootstrap
        return self.active and (self.validation_successes >= 1 or self.genesis)


class IntermediaryRegistry:
    def __init__(self, gas: GasLedger):
        self.gas = gas
        self.records: Dict[str, IntermediaryRecord] = {}

    def register(self, record: IntermediaryRecord) -> str:
        if record.eth_address in self.records:
            raise ContractError(f"{record.eth_address} is already registered")
        record._check()
        self.records[record.eth_address] = record
        self.gas.charge(record.eth_address, "IC.Register")
        return record.eth_address

    def update(self, iid: str, *, rates: Optional[Mapping[Tuple[str, str], object]] = None,
               coin_addresses: Optional[Mapping[str, str]] = None) -> None:
        rec = self.get(iid)
        if rates is not None:
            new_rates = {pair: Fraction(r) for pair, r in rates.items()}
            if any(r <= 0 for r in new_rates.values()):
                raise ContractError("rates must be > 0")
            rec.rates = new_rates
        if coin_addresses is not None:
            rec.coin_addresses = dict(coin_addresses)
        self.gas.charge(iid, "IC.Update")

    def get(self, iid: str) -> IntermediaryRecord:
        try:
            return self.records[iid]
        except KeyError:
            raise ContractError(f"unknown intermediary {iid!r}") from None

    def __contains__(self, iid: str) -> bool:
        return iid in self.records

    def suspend(self, iid: str) -> None:
        self.get(iid).active = False

    def record_success(self, iid: str) -> None:
        self.get(iid).validation_successes += 1


@dataclass(frozen=True)
class TradeIntent:
    payer: Party
    payee: Party
    asset_in: str
    asset_out: str
    amount: int
    c1: str
    c2: str

    @property
    def pair_key(self) -> Tuple[str, str]:
        return (self.payer.name, self.payee.name)


@dataclass(frozen=True)
class TransferRef:
    """Names one cross-chain transfer the committee has to judge."""

    session_id: int
    side: str  # "payer" or "payee"
    key: str   # intent index for payers, payee name for payees

    def __str__(self) -> str:
        return f"s{self.session_id}/{self.side}/{self.key}"


@dataclass(frozen=True)
class EscrowMovement:
    kind: str      # deposit | refund | return_c2 | forfeit_to_payee | forward_c1_to_c2
    owner: str     # "c1" or "c2": whose escrow the ether leaves or enters
    account: str   # counterparty on the ether chain
    amount: int


@dataclass
class SessionConfig:
    cap: int = 10
    collect_window_ms: int = 10 * MINUTE_MS
    phase_window_ms: int = 60 * MINUTE_MS
    fee_bps: int = 0

    def __post_init__(self):
        if self.cap < 1:
            raise ContractError("session cap must be >= 1")
        if not 0 <= self.fee_bps < 10_000:
            raise ContractError("fee_bps must be in [0, 10000)")


@dataclass
class TradeSession:
    session_id: int
    c1: str
    c2: str
    asset_in: str
    asset_out: str
    rate_in: Fraction   # ether per coin1 unit, C1's quote
    rate_out: Fraction  # coin2 per ether unit, C2's quote
    intents: List[TradeIntent] = field(default_factory=list)
    phase: Phase = Phase.COLLECTING
    total: int = 0
    amount_B: Dict[str, int] = field(default_factory=dict)
    slices: Dict[int, int] = field(default_factory=dict)
    required_deposit: int = 0
    c1_deposit: int = 0
    c2_deposit: int = 0
    deposited: Set[str] = field(default_factory=set)
    selections: Dict[str, Set[int]] = field(default_factory=dict)
    payer_outcomes: Dict[int, Outcome] = field(default_factory=dict)
    excluded: Dict[int, str] = field(default_factory=dict)
    payee_outcomes: Dict[str, Outcome] = field(default_factory=dict)
    payee_slice: Dict[str, int] = field(default_factory=dict)
    payee_due: Dict[str, int] = field(default_factory=dict)
    claims: Dict[TransferRef, str] = field(default_factory=dict)
    denials: List[Tuple[TransferRef, str]] = field(default_factory=list)
    deadlines: Dict[Phase, int] = field(default_factory=dict)
    movements: List[EscrowMovement] = field(default_factory=list)
    prepared_by: Set[str] = field(default_factory=set)
    escrowed_total: int = 0
    abort_reason: Optional[str] = None

    def payer_ref(self, i: int) -> TransferRef:
        return TransferRef(self.session_id, "payer", str(i))

    def payee_ref(self, payee: str) -> TransferRef:
        return TransferRef(self.session_id, "payee", payee)

    def payee_party(self, name: str) -> Party:
        for it in self.intents:
            if it.payee.name == name:
                return it.payee
        raise KeyError(name)

    def intent_for(self, ref: TransferRef) -> TradeIntent:
        return self.intents[int(ref.key)]

    @property
    def escrow_remaining(self) -> int:
        return self.c1_deposit + self.c2_deposit


@dataclass
class SettlementReport:
    session_id: int
    phase: Phase
    movements: List[EscrowMovement]
    total: int
    forwarded: int
    payouts: Dict[str, Tuple[str, int]]  # payee -> ("coin2" | "ether", amount)


class TransactionContract:
    """Serialized state machine; every call carries the simulated time ``now`` in ms."""

    ESCROW = "TC"

    def __init__(self, registry: IntermediaryRegistry, ether: Ledger, gas: GasLedger,
                 config: Optional[SessionConfig] = None):
        self.registry = registry
        self.ether = ether
        self.gas = gas
        self.config = config or SessionConfig()
        self.sessions: Dict[int, TradeSession] = {}
        self.new_refs: List[TransferRef] = []
        self._consumed: Dict[str, TransferRef] = {}

    @property
    def ether_id(self) -> str:
        return self.ether.chain_id

    def session(self, session_id: int) -> TradeSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ContractError(f"unknown session {session_id}") from None

    # -- TC.Prepare

    def prepare(self, intent: TradeIntent, now: int, session_id: Optional[int] = None) -> int:
        if intent.amount <= 0:
            raise ContractError("amount must be positive")
        if intent.c1 == intent.c2:
            raise ContractError("a trade needs two distinct intermediaries")
        for iid in (intent.c1, intent.c2):
            if not self.registry.get(iid).eligible:
                raise ContractError(f"{iid} is not eligible to act as an intermediary")
        c1, c2 = self.registry.get(intent.c1), self.registry.get(intent.c2)
        pin, pout = (intent.asset_in, self.ether_id), (self.ether_id, intent.asset_out)
        if pin not in c1.rates:
            raise ContractError(f"{intent.c1} does not support {pin}")
        if pout not in c2.rates:
            raise ContractError(f"{intent.c2} does not support {pout}")

        if session_id is None:
            s = self._open_session_for(intent)
            if s is None:
                s = self._new_session(intent, c1.rates[pin], c2.rates[pout], now)
        else:
            s = self.session(session_id)
            if (s.c1, s.c2, s.asset_in, s.asset_out) != (intent.c1, intent.c2, intent.asset_in, intent.asset_out):
                raise ContractError("intent does not match the session's intermediaries and assets")
        self._require(s, Phase.COLLECTING)

        merged = next((i for i, it in enumerate(s.intents) if it.pair_key == intent.pair_key), None)
        if merged is None and len(s.intents) >= self.config.cap:
            raise ContractError(f"session {s.session_id} is full")

        if intent.payer.name not in s.prepared_by:
            s.prepared_by.add(intent.payer.name)
            self.gas.charge(intent.payer.eth, "TC.Prepare")
        if merged is None:
            s.intents.append(intent)
            s.payer_outcomes[len(s.intents) - 1] = Outcome.PENDING
        else:
            old = s.intents[merged]
            s.intents[merged] = TradeIntent(old.payer, old.payee, old.asset_in, old.asset_out,
                                            old.amount + intent.amount, old.c1, old.c2)
        s.total += intent.amount
        if len(s.intents) >= self.config.cap:
            self._enter(s, Phase.AWAIT_SELECTION, now)
        return s.session_id

    def _open_session_for(self, intent: TradeIntent) -> Optional[TradeSession]:
        for s in self.sessions.values():
            if (s.phase is Phase.COLLECTING
                    and (s.c1, s.c2, s.asset_in, s.asset_out) == (intent.c1, intent.c2, intent.asset_in, intent.asset_out)
                    and (len(s.intents) < self.config.cap
                         or any(it.pair_key == intent.pair_key for it in s.intents))):
                return s
        return None

    def _new_session(self, intent: TradeIntent, rate_in: Fraction, rate_out: Fraction, now: int) -> TradeSession:
        sid = len(self.sessions)
        s = TradeSession(sid, intent.c1, intent.c2, intent.asset_in, intent.asset_out, rate_in, rate_out)
        s.deadlines[Phase.COLLECTING] = now + self.config.collect_window_ms
        self.sessions[sid] = s
        return s

    # -- deadlines

    def advance(self, now: int) -> List[Tuple[int, Phase, Phase]]:
        """Apply every phase deadline that has passed at ``now``."""
        changes = []
        for s in self.sessions.values():
            before = s.phase
            deadline = s.deadlines.get(s.phase)
            if deadline is None or now < deadline:
                continue
            if s.phase is Phase.COLLECTING:
                self._enter(s, Phase.AWAIT_SELECTION, now)
            elif s.phase in (Phase.AWAIT_SELECTION, Phase.AWAIT_DEPOSITS):
                self._abort(s, f"{s.phase.value} deadline passed")
            # transfer phases end through committee verdicts, the deadline only cues validators
            if s.phase is not before:
                changes.append((s.session_id, before, s.phase))
        return changes

    # -- selection

    def select(self, iid: str, session_id: int, accepted: Optional[Iterable[int]] = None,
               min_amount: int = 1, now: int = 0) -> None:
        s = self.session(session_id)
        self._require(s, Phase.AWAIT_SELECTION)
        if iid not in (s.c1, s.c2):
            raise ContractError(f"{iid} was not chosen for session {session_id}")
        if iid in s.selections:
            raise ContractError(f"{iid} already selected for session {session_id}")
        keep = set(range(len(s.intents))) if accepted is None else set(accepted)
        chosen = set()
        for i, it in enumerate(s.intents):
            if i not in keep:
                self._exclude(s, i, f"rejected by {iid}")
            elif it.amount < min_amount:
                self._exclude(s, i, f"below {iid}'s minimum {min_amount}")
            else:
                chosen.add(i)
        s.selections[iid] = chosen
        if len(s.selections) < 2:
            return
        for i in range(len(s.intents)):
            if s.payer_outcomes[i] is not Outcome.PENDING:
                continue
            slice_ = math.floor(s.intents[i].amount * s.rate_in)
            if slice_ <= 0:
                self._exclude(s, i, "ether equivalent rounds to zero")
            else:
                s.slices[i] = slice_
        s.required_deposit = sum(s.slices.values())
        if not s.slices:
            self._abort(s, "no intents selected")
        else:
            self._enter(s, Phase.AWAIT_DEPOSITS, now)

    def _exclude(self, s: TradeSession, i: int, reason: str) -> None:
        if s.payer_outcomes[i] is Outcome.PENDING:
            s.payer_outcomes[i] = Outcome.FAILED
            s.excluded[i] = reason
            s.total -= s.intents[i].amount

    # -- TC.Deposit

    def deposit(self, iid: str, session_id: int, amount: int, now: int) -> None:
        s = self.session(session_id)
        self._require(s, Phase.AWAIT_DEPOSITS)
        if now >= s.deadlines[Phase.AWAIT_DEPOSITS]:
            self._abort(s, "deposit deadline passed")
            raise ContractError(f"deposit deadline of session {session_id} passed")
        if iid not in (s.c1, s.c2):
            raise ContractError(f"{iid} is not an intermediary of session {session_id}")
        if iid in s.deposited:
            raise ContractError(f"{iid} already deposited")
        if amount != s.required_deposit:
            raise ContractError(f"deposit must be exactly {s.required_deposit}, got {amount}")
        eth = self.registry.get(iid).eth_address
        try:
            self.ether.execute(eth, self.ESCROW, amount)
        except LedgerError as exc:
            raise ContractError(f"deposit by {iid} failed: {exc}") from exc
        self.gas.charge(eth, "TC.Deposit")
        owner = "c1" if iid == s.c1 else "c2"
        if owner == "c1":
            s.c1_deposit += amount
        else:
            s.c2_deposit += amount
        s.escrowed_total += amount
        s.deposited.add(iid)
        s.movements.append(EscrowMovement("deposit", owner, eth, amount))
        if s.deposited == {s.c1, s.c2}:
            self._enter(s, Phase.AWAIT_PAYER_TRANSFERS, now)
            for i in sorted(s.slices):
                self.new_refs.append(s.payer_ref(i))

    # -- transfer announcements (piggybacked calldata, no separate gas line)

    def claim(self, ref: TransferRef, tx_id: str, caller: str) -> None:
        s = self.session(ref.session_id)
        if ref.side == "payer":
            self._require(s, Phase.AWAIT_PAYER_TRANSFERS)
            i = int(ref.key)
            if i not in s.slices or caller != s.intents[i].payer.name:
                raise ContractError(f"{caller} cannot claim {ref}")
        elif ref.side == "payee":
            self._require(s, Phase.AWAIT_PAYEE_TRANSFERS)
            if ref.key not in s.payee_outcomes or caller != s.c2:
                raise ContractError(f"{caller} cannot claim {ref}")
        else:
            raise ContractError(f"bad ref {ref}")
        if ref in s.claims:
            raise ContractError(f"{ref} already claimed")
        if tx_id in self._consumed:
            raise ContractError(f"{tx_id} already backs {self._consumed[tx_id]}")
        s.claims[ref] = tx_id
        self._consumed[tx_id] = ref

    def deny(self, ref: TransferRef, caller: str, note: str = "not received") -> None:
        s = self.session(ref.session_id)
        s.denials.append((ref, f"{caller}: {note}"))

    def expected(self, ref: TransferRef) -> Tuple[str, str, str, int]:
        """(chain, sender, recipient, minimum amount) a claim for ``ref`` must match."""
        s = self.session(ref.session_id)
        if ref.side == "payer":
            it = s.intent_for(ref)
            to = self.registry.get(s.c1).coin_addresses.get(s.asset_in, s.c1)
            return s.asset_in, it.payer.coin, to, it.amount
        payee = s.payee_party(ref.key)
        sender = self.registry.get(s.c2).coin_addresses.get(s.asset_out, s.c2)
        return s.asset_out, sender, payee.coin, s.payee_due[ref.key]

    def phase_deadline(self, ref: TransferRef) -> int:
        s = self.session(ref.session_id)
        ph = Phase.AWAIT_PAYER_TRANSFERS if ref.side == "payer" else Phase.AWAIT_PAYEE_TRANSFERS
        return s.deadlines[ph]

    # -- verdicts

    def record_final_verdict(self, ref: TransferRef, verdict: Outcome, now: int = 0) -> None:
        verdict = Outcome(verdict)
        if verdict is Outcome.PENDING:
            raise ContractError("a final verdict cannot be Pending")
        s = self.session(ref.session_id)
        if ref.side == "payer":
            self._require(s, Phase.AWAIT_PAYER_TRANSFERS)
            i = int(ref.key)
            if i not in s.slices:
                raise ContractError(f"unknown transfer {ref}")
            if s.payer_outcomes[i] is not Outcome.PENDING:
                raise ContractError(f"duplicate verdict for {ref}")
            s.payer_outcomes[i] = verdict
            if verdict is Outcome.FAILED:
                s.total -= s.intents[i].amount
                self._release_slice(s, s.slices[i])
            if all(s.payer_outcomes[j] is not Outcome.PENDING for j in s.slices):
                self._fix_payouts(s, now)
        elif ref.side == "payee":
            self._require(s, Phase.AWAIT_PAYEE_TRANSFERS)
            if ref.key not in s.payee_outcomes:
                raise ContractError(f"unknown transfer {ref}")
            if s.payee_outcomes[ref.key] is not Outcome.PENDING:
                raise ContractError(f"duplicate verdict for {ref}")
            s.payee_outcomes[ref.key] = verdict
        else:
            raise ContractError(f"unknown transfer {ref}")

    def _release_slice(self, s: TradeSession, amount: int) -> None:
        for owner, iid in (("c1", s.c1), ("c2", s.c2)):
            eth = self.registry.get(iid).eth_address
            self._pay_out(s, owner, eth, amount, "refund")

    def _fix_payouts(self, s: TradeSession, now: int) -> None:
        for i, it in enumerate(s.intents):
            if s.payer_outcomes[i] is not Outcome.CONFIRMED:
                continue
            name = it.payee.name
            s.amount_B[name] = s.amount_B.get(name, 0) + it.amount
            s.payee_slice[name] = s.payee_slice.get(name, 0) + s.slices[i]
        keep = Fraction(10_000 - self.config.fee_bps, 10_000)
        for name, eth_amount in s.payee_slice.items():
            s.payee_due[name] = math.floor(eth_amount * s.rate_out * keep)
            s.payee_outcomes[name] = Outcome.PENDING
        self._enter(s, Phase.AWAIT_PAYEE_TRANSFERS, now)
        for name in s.payee_slice:
            self.new_refs.append(s.payee_ref(name))

    def ready_to_settle(self, session_id: int) -> bool:
        s = self.session(session_id)
        return (s.phase is Phase.AWAIT_PAYEE_TRANSFERS
                and all(o is not Outcome.PENDING for o in s.payee_outcomes.values()))

    # -- settlement

    def settle(self, session_id: int) -> SettlementReport:
        s = self.session(session_id)
        self._require(s, Phase.AWAIT_PAYEE_TRANSFERS)
        if not self.ready_to_settle(session_id):
            raise ContractError(f"session {session_id} still has undecided payee transfers")
        payouts: Dict[str, Tuple[str, int]] = {}
        forwarded = 0
        if s.total == 0:
            # nothing traded; every slice went back on the payer verdicts
            s.phase = Phase.ABORTED
            s.abort_reason = "every payer transfer failed"
        else:
            c2_eth = self.registry.get(s.c2).eth_address
            for name, eth_amount in s.payee_slice.items():
                if s.payee_outcomes[name] is Outcome.CONFIRMED:
                    self._pay_out(s, "c2", c2_eth, eth_amount, "return_c2")
                    payouts[name] = ("coin2", s.payee_due[name])
                else:
                    payee = s.payee_party(name)
                    self._pay_out(s, "c2", payee.eth, eth_amount, "forfeit_to_payee")
                    payouts[name] = ("ether", eth_amount)
            forwarded = s.c1_deposit
            self._pay_out(s, "c1", c2_eth, forwarded, "forward_c1_to_c2")
            s.phase = Phase.SETTLED
        return SettlementReport(s.session_id, s.phase, list(s.movements), s.total, forwarded, payouts)

    # -- helpers

    def _pay_out(self, s: TradeSession, owner: str, account: str, amount: int, kind: str) -> None:
        if amount == 0:
            return
        held = s.c1_deposit if owner == "c1" else s.c2_deposit
        if amount > held:
            raise ContractError(f"escrow of {owner} in session {s.session_id} holds {held}, cannot pay {amount}")
        self.ether.execute(self.ESCROW, account, amount)
        if owner == "c1":
            s.c1_deposit -= amount
        else:
            s.c2_deposit -= amount
        s.movements.append(EscrowMovement(kind, owner, account, amount))

    def _abort(self, s: TradeSession, reason: str) -> None:
        for owner, iid in (("c1", s.c1), ("c2", s.c2)):
            held = s.c1_deposit if owner == "c1" else s.c2_deposit
            self._pay_out(s, owner, self.registry.get(iid).eth_address, held, "refund")
        s.phase = Phase.ABORTED
        s.abort_reason = reason

    def _enter(self, s: TradeSession, phase: Phase, now: int) -> None:
        s.phase = phase
        if phase in (Phase.AWAIT_SELECTION, Phase.AWAIT_DEPOSITS,
                     Phase.AWAIT_PAYER_TRANSFERS, Phase.AWAIT_PAYEE_TRANSFERS):
            s.deadlines[phase] = now + self.config.phase_window_ms

    @staticmethod
    def _require(s: TradeSession, phase: Phase) -> None:
        if s.phase is not phase:
            raise PhaseError(f"session {s.session_id} is in {s.phase.value}, operation needs {phase.value}")


def screen_intents(session: TradeSession, coin_ledger: Ledger, min_amount: int = 1) -> List[int]:
    """An intermediary's off-chain check: payer holds enough confirmed coin and the amount is not dust."""
    return [i for i, it in enumerate(session.intents)
            if it.amount >= min_amount and coin_ledger.balance(it.payer.coin) >= it.amount]


def deploy(ether: Ledger, gas: GasLedger, config: Optional[SessionConfig] = None,
           deployer: str = "deployer") -> Tuple[IntermediaryRegistry, TransactionContract]:
    """Create both contracts, charging one Deploy."""
    gas.charge(deployer, "Deploy")
    registry = IntermediaryRegistry(gas)
    return registry, TransactionContract(registry, ether, gas, config)
