"""
PoW-elected validation committee.

Intermediaries that solve the epoch's puzzle and post a stake join the
committee (up to ``committee_cap`` members). Members vote Confirmed/Failed on
cross-chain transfers; a verdict finalizes when it has strictly more votes
than the other one *and* more than ``threshold_a``. Members who voted
against the final verdict lose their stake, which is split equally among
the rest.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Hashable, List, Optional, Tuple

from .contracts import IntermediaryRegistry
from .errors import CommitteeError, ConfigError, LedgerError
from .gas import GasLedger
from .ledger import Ledger

logger = logging.getLogger(__name__)

HASH_SPACE = 2 ** 256
MAX_TARGET = HASH_SPACE - 1


class Verdict(str, enum.Enum):
    CONFIRMED = "Confirmed"
    FAILED = "Failed"

    def inverse(self) -> "Verdict":
        return Verdict.FAILED if self is Verdict.CONFIRMED else Verdict.CONFIRMED


@dataclass
class PowParams:
    target: int
    epoch_length: int = 600
    committee_cap: int = 10
    retarget_clamp: int = 4

    def __post_init__(self):
        if not 0 < self.target < HASH_SPACE:
            raise ConfigError("target must satisfy 0 < target < 2^256")
        if self.committee_cap < 3:
            raise ConfigError("committee_cap must be >= 3")
        if self.epoch_length <= 0:
            raise ConfigError("epoch_length must be > 0")
        if self.retarget_clamp < 1:
            raise ConfigError("retarget_clamp must be >= 1")


def pow_digest(epoch_id: int, candidate: str, nonce: int) -> int:
    """SHA-256 of ``epoch_id|candidate|nonce`` read as a big-endian integer."""
    data = f"{epoch_id}|{candidate}|{nonce}".encode()
    return int.from_bytes(hashlib.sha256(data).digest(), "big")


def check_pow(epoch_id: int, candidate: str, nonce: int, target: int) -> bool:
    return pow_digest(epoch_id, candidate, nonce) < target


def solve_pow(candidate: str, epoch_id: int, target: int, rng: Optional[random.Random] = None,
              max_tries: Optional[int] = None) -> Optional[int]:
    """First nonce, counting up from a start drawn from ``rng`` (or 0), that meets ``target``.

    Returns None when ``target <= 0`` (nothing can satisfy it) or when
    ``max_tries`` runs out.
    """
    if target <= 0:
        return None
    nonce = rng.getrandbits(32) if rng is not None else 0
    tries = 0
    while max_tries is None or tries < max_tries:
        if pow_digest(epoch_id, candidate, nonce) < target:
            return nonce
        nonce += 1
        tries += 1
    return None


def retarget(old_target: int, admissions: int, elapsed: float, epoch_length: int,
             committee_cap: int, clamp: int = 4) -> int:
    """Scale the target by actual/desired admission interval, clamped to a factor of ``clamp``.

    The desired interval is ``epoch_length / committee_cap``.
    """
    if elapsed <= 0:
        raise ValueError("elapsed must be > 0")
    lo, hi = old_target // clamp, old_target * clamp
    if admissions == 0:
        new = hi
    else:
        ratio = Fraction(elapsed) * committee_cap / (admissions * epoch_length)
        new = int(old_target * ratio)
    new = min(max(new, lo), hi)
    return min(max(new, 1), MAX_TARGET)


@dataclass
class CommitteeEpoch:
    epoch_id: int
    target: int
    threshold_a: int
    members: List[str] = field(default_factory=list)
    stakes: Dict[str, int] = field(default_factory=dict)
    votes: Dict[Hashable, Dict[str, Verdict]] = field(default_factory=dict)
    finalized: Dict[Hashable, Tuple[Verdict, FrozenSet[str]]] = field(default_factory=dict)
    assigned: List[Hashable] = field(default_factory=list)
    admissions: List[Tuple[str, int]] = field(default_factory=list)
    rejections: List[Tuple[str, str]] = field(default_factory=list)
    tenure_over: bool = False
    closed: bool = False
    escrowed: int = 0
    returned: int = 0
    paid_out: int = 0
    treasury: int = 0

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class TallyResult:
    ref: Hashable
    epoch_id: int
    verdict: Optional[Verdict]
    dissenters: FrozenSet[str]
    counts: Dict[str, int]

    @property
    def escalated(self) -> bool:
        return self.verdict is None


@dataclass(frozen=True)
class SlashOutcome:
    payouts: Dict[str, int]
    slashed: int
    treasury: int


def majority(votes: Dict[str, Verdict], threshold_a: int, size: int) -> Optional[Verdict]:
    """Winning verdict, or None when nothing clears the threshold (tie, no quorum, tiny committee)."""
    if threshold_a >= size:
        return None
    conf = sum(1 for v in votes.values() if v is Verdict.CONFIRMED)
    fail = sum(1 for v in votes.values() if v is Verdict.FAILED)
    if conf > fail and conf > threshold_a:
        return Verdict.CONFIRMED
    if fail > conf and fail > threshold_a:
        return Verdict.FAILED
    return None


class Committee:
    """All epochs of the validation committee plus their stake escrow on the ether chain."""

    ESCROW = "IC"
    TREASURY = "treasury"

    def __init__(self, params: PowParams, registry: IntermediaryRegistry, ether: Ledger, gas: GasLedger,
                 threshold_a: Optional[int] = None, min_stake: int = 1):
        self.params = params
        self.registry = registry
        self.ether = ether
        self.gas = gas
        self.threshold_a = params.committee_cap // 2 if threshold_a is None else threshold_a
        if not 0 <= self.threshold_a < params.committee_cap:
            raise ConfigError("threshold_a must satisfy 0 <= a < committee_cap")
        if min_stake < 1:
            raise ConfigError("min_stake must be >= 1")
        self.min_stake = min_stake
        self.epochs: Dict[int, CommitteeEpoch] = {}
        self.current: Optional[int] = None
        self.target = params.target
        self._where: Dict[Hashable, int] = {}
        self._escalated: Dict[int, List[Hashable]] = {}

    # -- epochs

    def open_epoch(self, epoch_id: int, target: Optional[int] = None) -> CommitteeEpoch:
        if epoch_id in self.epochs:
            raise CommitteeError(f"epoch {epoch_id} already opened")
        if self.current is not None:
            if epoch_id <= self.current:
                raise CommitteeError("epochs must open in increasing order")
            self.epochs[self.current].tenure_over = True
        if target is not None:
            self.target = target
        ep = CommitteeEpoch(epoch_id, self.target, self.threshold_a)
        self.epochs[epoch_id] = ep
        self.current = epoch_id
        for eid in sorted(k for k in self._escalated if k <= epoch_id):
            for ref in self._escalated.pop(eid):
                self._assign(ref, ep)
        return ep

    def epoch(self, epoch_id: Optional[int] = None) -> CommitteeEpoch:
        eid = self.current if epoch_id is None else epoch_id
        if eid is None or eid not in self.epochs:
            raise CommitteeError(f"no epoch {eid}")
        return self.epochs[eid]

    def close_epoch(self, epoch_id: int, force: bool = False) -> Dict[str, int]:
        """Return remaining members' stakes. Needs every assigned transfer resolved unless ``force``."""
        ep = self.epoch(epoch_id)
        if ep.closed:
            return {}
        if ep.assigned and not force:
            raise CommitteeError(f"epoch {epoch_id} still has {len(ep.assigned)} unresolved transfers")
        returned = {}
        for m in list(ep.members):
            amount = ep.stakes.get(m, 0)
            if amount:
                self.ether.execute(self.ESCROW, self.registry.get(m).eth_address, amount)
                ep.returned += amount
                ep.stakes[m] = 0
                returned[m] = amount
        ep.closed = True
        ep.tenure_over = True
        for ref in ep.assigned:
            self._where.pop(ref, None)
        ep.assigned.clear()
        return returned

    def closable(self) -> List[int]:
        return [e.epoch_id for e in self.epochs.values() if e.tenure_over and not e.closed and not e.assigned]

    # -- IC.Verify_PoW

    def verify_pow(self, candidate: str, epoch_id: int, nonce: int, stake: int) -> bool:
        if candidate not in self.registry:
            raise CommitteeError(f"{candidate} is not registered")
        ep = self.epoch(epoch_id)
        if ep.epoch_id != self.current or ep.closed:
            raise CommitteeError(f"epoch {epoch_id} is not open for admissions")
        rec = self.registry.get(candidate)
        self.gas.charge(rec.eth_address, "IC.Verify_PoW")

        def reject(reason: str) -> bool:
            ep.rejections.append((candidate, reason))
            return False

        if not rec.active:
            return reject("suspended")
        if candidate in ep.members:
            return reject("already a member")
        if stake < self.min_stake:
            return reject("insufficient stake")
        if not check_pow(epoch_id, candidate, nonce, ep.target):
            return reject("invalid nonce")
        if ep.size >= self.params.committee_cap:
            return reject("committee full")
        try:
            self.ether.execute(rec.eth_address, self.ESCROW, stake)
        except LedgerError:
            return reject("stake not covered by balance")
        ep.members.append(candidate)
        ep.stakes[candidate] = stake
        ep.escrowed += stake
        ep.admissions.append((candidate, nonce))
        return True

    # -- transfers, votes, tally

    def assign(self, ref: Hashable, epoch_id: Optional[int] = None) -> int:
        if ref in self._where:
            raise CommitteeError(f"{ref} already assigned")
        ep = self.epoch(epoch_id)
        self._assign(ref, ep)
        return ep.epoch_id

    def _assign(self, ref: Hashable, ep: CommitteeEpoch) -> None:
        ep.assigned.append(ref)
        ep.votes[ref] = {}
        self._where[ref] = ep.epoch_id

    def epoch_of(self, ref: Hashable) -> Optional[int]:
        return self._where.get(ref)

    def outstanding(self) -> List[Hashable]:
        out = [r for e in self.epochs.values() for r in e.assigned]
        out += [r for refs in self._escalated.values() for r in refs]
        return out

    def submit_vote(self, member: str, ref: Hashable, verdict: Verdict) -> None:
        eid = self._where.get(ref)
        if eid is None:
            raise CommitteeError(f"{ref} is not assigned to an open epoch")
        ep = self.epochs[eid]
        if member not in ep.members:
            raise CommitteeError(f"{member} is not a member of epoch {eid}")
        if member in ep.votes[ref]:
            raise CommitteeError(f"{member} already voted on {ref}")
        ep.votes[ref][member] = Verdict(verdict)
        self.gas.charge(self.registry.get(member).eth_address, "TC.Validation")

    def all_voted(self, ref: Hashable) -> bool:
        eid = self._where.get(ref)
        if eid is None:
            return False
        ep = self.epochs[eid]
        return bool(ep.members) and all(m in ep.votes[ref] for m in ep.members)

    def vote_count(self, ref: Hashable) -> int:
        eid = self._where.get(ref)
        return 0 if eid is None else len(self.epochs[eid].votes[ref])

    def tally(self, ref: Hashable, deadline_passed: bool = False) -> TallyResult:
        eid = self._where.get(ref)
        if eid is None:
            raise CommitteeError(f"{ref} is not assigned")
        ep = self.epochs[eid]
        if not self.all_voted(ref) and not deadline_passed:
            raise CommitteeError(f"not every member has voted on {ref}")
        votes = {m: v for m, v in ep.votes[ref].items() if m in ep.members}
        counts = {v.value: sum(1 for x in votes.values() if x is v) for v in Verdict}
        winner = majority(votes, ep.threshold_a, ep.size)
        ep.assigned.remove(ref)
        del self._where[ref]
        if winner is None:
            del ep.votes[ref]
            if self.current is not None and self.current > eid:
                self._assign(ref, self.epochs[self.current])
            else:
                self._escalated.setdefault(eid + 1, []).append(ref)
            return TallyResult(ref, eid, None, frozenset(), counts)
        dissenters = frozenset(m for m, v in votes.items() if v is not winner)
        ep.finalized[ref] = (winner, dissenters)
        return TallyResult(ref, eid, winner, dissenters, counts)

    def slash_and_distribute(self, epoch_id: int, dissenters) -> SlashOutcome:
        ep = self.epoch(epoch_id)
        dissenters = set(dissenters)
        if not dissenters <= set(ep.members):
            raise CommitteeError("dissenters must be committee members")
        slashed = 0
        for d in sorted(dissenters):
            slashed += ep.stakes.pop(d, 0)
            ep.members.remove(d)
            self.registry.suspend(d)
        honest = list(ep.members)
        payouts: Dict[str, int] = {}
        share = slashed // len(honest) if honest else 0
        for m in honest:
            if share:
                self.ether.execute(self.ESCROW, self.registry.get(m).eth_address, share)
                payouts[m] = share
            self.registry.record_success(m)
        residue = slashed - share * len(honest)
        if residue:
            self.ether.execute(self.ESCROW, self.TREASURY, residue)
        ep.paid_out += share * len(honest)
        ep.treasury += residue
        return SlashOutcome(payouts, slashed, residue)
