"""
Deterministic discrete-event engine.

Simulated time is an integer number of milliseconds. Each tick runs, in
order: scheduled blocks on every chain, the committee epoch boundary
(election and retarget), contract deadlines, then rounds of actor steps in
actor-id order until nobody acts. After every round the engine hands new
transfer references to the committee and tallies whatever can be tallied.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Dict, List, Optional, Tuple

from ..committee import HASH_SPACE, Committee, PowParams, Verdict, retarget, solve_pow
from ..contracts import (IntermediaryRecord, Outcome, Party, TradeIntent, TradeSession, TransferRef, deploy)
from ..errors import InvariantViolation, XchxError
from ..gas import DEFAULT_GAS_PRICE, DEFAULT_USD_PER_ETHER, GasCharge, GasLedger
from ..ledger import Ledger, create_chain
from .actors import Action, Actor, Validator, build_actors
from .scenario import Scenario
from .trace import Metrics, Trace

logger = logging.getLogger(__name__)

ENGINE = "engine"
NONCE_BUDGET = 2_000_000
MAX_ROUNDS = 64


def substream(seed: int, actor_id: str) -> random.Random:
    """Per-actor RNG keyed on (seed, actor id); other actors never shift it."""
    digest = hashlib.sha256(f"{seed}:{actor_id}".encode()).digest()
    return random.Random(int.from_bytes(digest, "big"))


def solve_time_sample(target: int, hash_rate: float, rng: random.Random) -> float:
    """Seconds until a miner with ``hash_rate`` hashes/s first lands below ``target``."""
    if hash_rate <= 0:
        raise ValueError("hash_rate must be > 0")
    if target <= 0:
        return math.inf
    rate = hash_rate * (target / HASH_SPACE)
    if rate <= 0:
        return math.inf
    return rng.expovariate(rate)


def _jsonable(x: Any) -> Any:
    if isinstance(x, (TransferRef,)):
        return str(x)
    if isinstance(x, (Verdict, Outcome)):
        return x.value
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = [_jsonable(v) for v in x]
        return sorted(items) if isinstance(x, (set, frozenset)) else items
    if isinstance(x, (int, float, str, bool)) or x is None:
        return x
    return str(x)


@dataclass
class RunResult:
    trace: Trace
    metrics: Metrics
    engine: "Engine"

    @property
    def trace_hash(self) -> str:
        return self.trace.hash


class Engine:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None,
                 gas_price: Optional[Decimal] = None, usd_per_ether: Optional[Decimal] = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.now = 0
        self.trace = Trace()
        self.metrics = Metrics()
        self.ledgers: Dict[str, Ledger] = {}
        for cfg in scenario.chains:
            create_chain(cfg, self.ledgers)
        self.ether = self.ledgers[scenario.ether_chain]
        self.supply = {cid: led.total_supply for cid, led in self.ledgers.items()}
        self.gas = GasLedger(table=dict(scenario.gas_table),
                             gas_price=DEFAULT_GAS_PRICE if gas_price is None else Decimal(gas_price),
                             usd_per_ether=DEFAULT_USD_PER_ETHER if usd_per_ether is None else Decimal(usd_per_ether))
        self.gas.listeners.append(self._on_gas)
        self.actors: Dict[str, Actor] = build_actors(scenario)
        self.rngs = {aid: substream(self.seed, aid) for aid in self.actors}
        self.validators = [a for a in self.actors.values() if isinstance(a, Validator)]
        self.in_use = bool(scenario.intermediaries or scenario.trades)
        self.registry = None
        self.tc = None
        self.committee: Optional[Committee] = None
        self.epoch_ms = scenario.committee.epoch_length_s * 1000
        self.next_epoch_at: Optional[int] = None
        self.assigned_at: Dict[TransferRef, int] = {}
        self._assigned_epoch: Dict[TransferRef, int] = {}
        self._verdicts: Dict[TransferRef, Tuple[Verdict, int, Optional[str]]] = {}
        self._epoch_stats: Dict[int, Tuple[int, float]] = {}
        self._phase: Dict[int, Any] = {}
        self._cursor: Dict[int, int] = {}
        self._ended: set = set()
        self._blocks = {cid: 0 for cid in self.ledgers}
        self._interval_ms = {cid: max(1, round(led.config.block_interval * 1000)) for cid, led in self.ledgers.items()}

    # -- public view used by actors

    def refs_awaiting_vote(self, member: str) -> List[TransferRef]:
        out = []
        for ref in self.committee.outstanding() if self.committee else ():
            eid = self.committee.epoch_of(ref)
            if eid is None:
                continue
            ep = self.committee.epochs[eid]
            if member in ep.members and member not in ep.votes[ref]:
                out.append(ref)
        return out

    def vote_deadline(self, ref: TransferRef) -> int:
        return max(self.tc.phase_deadline(ref), self.assigned_at.get(ref, 0))

    def transfer_holds(self, ref: TransferRef, tx_id: Optional[str], min_depth: int = 1) -> bool:
        """Is ``tx_id`` a canonical transfer matching ``ref`` with at least ``min_depth`` confirmations?"""
        if tx_id is None:
            return False
        chain, sender, recipient, amount = self.tc.expected(ref)
        led = self.ledgers[chain]
        t = led.canonical_transfer(tx_id)
        if t is None or t.sender != sender or t.recipient != recipient or t.amount < amount:
            return False
        return led.confirmation_depth(tx_id) >= min_depth

    def honest_verdict(self, ref: TransferRef) -> Optional[Verdict]:
        """Confirmed once the claimed transfer is k deep; Failed once the deadline passes without that."""
        chain = self.tc.expected(ref)[0]
        k = self.ledgers[chain].config.confirmation_depth_default
        tx_id = self.tc.session(ref.session_id).claims.get(ref)
        if self.transfer_holds(ref, tx_id, k):
            return Verdict.CONFIRMED
        if self.now >= self.vote_deadline(ref):
            return Verdict.FAILED
        return None

    # -- driver

    def run(self) -> RunResult:
        self._setup()
        end_ms = round(self.scenario.duration_s * 1000)
        while True:
            self._tick()
            if self._quiescent():
                break
            nxt = self._next_time()
            if nxt is None or nxt > end_ms:
                break
            self.now = nxt
        self._finish()
        return RunResult(self.trace, self.metrics, self)

    def emit(self, actor: str, action: str, **payload: Any) -> None:
        self.trace.append(self.now, actor, action, _jsonable(payload))

    def _on_gas(self, c: GasCharge) -> None:
        self.metrics.gas_total += c.gas
        self.metrics.gas_by_caller[c.caller] = self.metrics.gas_by_caller.get(c.caller, 0) + c.gas
        self.emit(c.caller, "gas", caller=c.caller, op=c.op, gas=c.gas)

    def _setup(self) -> None:
        self.emit(ENGINE, "start", seed=self.seed, scenario=self.scenario.name,
                  actors={aid: a.kind for aid, a in self.actors.items()})
        if not self.in_use:
            return
        self.registry, self.tc = deploy(self.ether, self.gas, self.scenario.session)
        cc = self.scenario.committee
        params = PowParams(cc.initial_target, cc.epoch_length_s, cc.w, cc.retarget_clamp)
        self.committee = Committee(params, self.registry, self.ether, self.gas, cc.threshold_a, cc.min_stake)
        for seed in self.scenario.intermediaries:
            rec = IntermediaryRecord(seed.id, dict(seed.coin_addresses), dict(seed.rates), genesis=seed.genesis)
            self.registry.register(rec)
            self.emit(seed.id, "register", id=seed.id, pairs=[f"{a}->{b}@{r}" for (a, b), r in sorted(rec.rates.items())])
        self._open_epoch(0)

    def _tick(self) -> None:
        for cid, led in self.ledgers.items():
            while (self._blocks[cid] + 1) * self._interval_ms[cid] <= self.now:
                self._blocks[cid] += 1
                block = led.mine_block()
                if block.transfers:
                    self.emit(cid, "block", height=block.height, txs=[t.tx_id for t in block.transfers])
        if self.committee is None:
            return
        if self.now >= self.next_epoch_at:
            self._open_epoch(self.committee.current + 1)
        for sid, before, after in self.tc.advance(self.now):
            logger.debug("session %s deadline: %s -> %s", sid, before.value, after.value)
        self._sync()
        for _ in range(MAX_ROUNDS):
            progressed = False
            for aid, actor in self.actors.items():
                for action in actor.step(self, self.rngs[aid]):
                    progressed = True
                    self._execute(actor, action)
                self._sync()
            if self._process_committee():
                progressed = True
            if not progressed:
                break
        else:
            raise InvariantViolation("progress", f"actors still acting after {MAX_ROUNDS} rounds at t={self.now}")
        for eid in self.committee.closable():
            returned = self.committee.close_epoch(eid)
            self.emit(ENGINE, "epoch.close", epoch=eid, returned=returned)

    def _quiescent(self) -> bool:
        if any(not a.finished(self) for a in self.actors.values()):
            return False
        if self.tc is not None and any(not s.phase.terminal for s in self.tc.sessions.values()):
            return False
        return not (self.committee and self.committee.outstanding())

    def _next_time(self) -> Optional[int]:
        cands = [(self._blocks[cid] + 1) * self._interval_ms[cid] for cid in self.ledgers]
        if self.committee is not None:
            cands.append(self.next_epoch_at)
            for s in self.tc.sessions.values():
                d = s.deadlines.get(s.phase)
                if not s.phase.terminal and d is not None and d > self.now:
                    cands.append(d)
            for ref in self.committee.outstanding():
                if self.committee.epoch_of(ref) is not None:
                    d = self.vote_deadline(ref)
                    if d > self.now:
                        cands.append(d)
        for a in self.actors.values():
            w = a.next_wake(self.now)
            if w is not None and w > self.now:
                cands.append(w)
        return min(cands) if cands else None

    # -- committee

    def _open_epoch(self, eid: int) -> None:
        cc = self.scenario.committee
        target = None
        if eid > 0 and cc.retarget:
            admitted, elapsed = self._epoch_stats[eid - 1]
            target = retarget(self.committee.target, admitted, elapsed, cc.epoch_length_s, cc.w, cc.retarget_clamp)
        ep = self.committee.open_epoch(eid, target)
        self.next_epoch_at = (eid + 1) * self.epoch_ms
        self.emit(ENGINE, "epoch.open", epoch=eid, target=hex(ep.target), carried=list(ep.assigned))

        draws = []
        for v in self.validators:
            if not self.registry.get(v.id).active:
                continue
            st = solve_time_sample(ep.target, v.hash_rate, self.rngs[v.id])
            if st <= cc.epoch_length_s:
                draws.append((round(st * 1000), v.id))
        draws.sort()
        last = 0
        for st_ms, vid in draws:
            if ep.size >= cc.w:
                break
            nonce = solve_pow(vid, eid, ep.target, self.rngs[vid], max_tries=NONCE_BUDGET)
            if nonce is None:
                self._reject(vid, "verify_pow", "nonce search budget exhausted")
                continue
            if self.committee.verify_pow(vid, eid, nonce, cc.stake_amount):
                self.metrics.admissions += 1
                last = st_ms
                self.emit(vid, "admit", epoch=eid, solve_ms=st_ms, nonce=nonce)
            else:
                self._reject(vid, "verify_pow", ep.rejections[-1][1])
        # a full committee measures how fast seats filled; otherwise the whole window was needed
        elapsed = max(last, 1) / 1000 if ep.size >= cc.w else cc.epoch_length_s
        self._epoch_stats[eid] = (ep.size, elapsed)
        self._sync()

    def _process_committee(self) -> bool:
        did = False
        for ref in list(self.committee.outstanding()):
            eid = self.committee.epoch_of(ref)
            if eid is None:
                continue
            if self.committee.all_voted(ref):
                res = self.committee.tally(ref)
            elif self.now >= self.vote_deadline(ref):
                res = self.committee.tally(ref, deadline_passed=True)
            else:
                continue
            did = True
            self.metrics.tallies += 1
            self.emit(ENGINE, "tally", ref=ref, epoch=eid, verdict=res.verdict, counts=res.counts,
                      dissenters=res.dissenters)
            if res.escalated:
                self.metrics.escalations += 1
                self._sync()
                continue
            self.metrics.finalizations += 1
            out = self.committee.slash_and_distribute(eid, res.dissenters)
            if res.dissenters:
                self.metrics.slashings += len(res.dissenters)
                self.emit(ENGINE, "slash", epoch=eid, dissenters=res.dissenters, payouts=out.payouts,
                          treasury=out.treasury)
            tx_id = self.tc.session(ref.session_id).claims.get(ref)
            self._verdicts[ref] = (res.verdict, eid, tx_id)
            self.tc.record_final_verdict(ref, Outcome(res.verdict.value), self.now)
            self.emit(ENGINE, "verdict", ref=ref, verdict=res.verdict)
            if self.tc.ready_to_settle(ref.session_id):
                self.tc.settle(ref.session_id)
            self._sync()
        return did

    # -- bookkeeping after every state change

    def _sync(self) -> None:
        if self.tc is None:
            return
        for sid, s in self.tc.sessions.items():
            moves = s.movements[self._cursor.get(sid, 0):]
            for m in moves:
                self.emit(ENGINE, "escrow", session=sid, kind=m.kind, owner=m.owner, account=m.account, amount=m.amount)
                if m.kind != "deposit":
                    self.metrics.settlement_movements += 1
                if m.kind == "forfeit_to_payee":
                    self.metrics.escrow_forfeitures += 1
            self._cursor[sid] = len(s.movements)
            if self._phase.get(sid) is not s.phase:
                prev = self._phase.get(sid)
                self.emit(ENGINE, "phase", session=sid, before=None if prev is None else prev.value, after=s.phase.value)
                self._phase[sid] = s.phase
            if s.phase.terminal and sid not in self._ended:
                self._ended.add(sid)
                self._end_session(s)
        while self.tc.new_refs:
            ref = self.tc.new_refs.pop(0)
            self.committee.assign(ref)
        for ref in self.committee.outstanding():
            eid = self.committee.epoch_of(ref)
            if eid is not None and self._assigned_epoch.get(ref) != eid:
                self._assigned_epoch[ref] = eid
                self.assigned_at[ref] = self.now
                self.emit(ENGINE, "assign", ref=ref, epoch=eid)

    def _end_session(self, s: TradeSession) -> None:
        if s.phase.value == "Settled":
            self.metrics.sessions_settled += 1
        else:
            self.metrics.sessions_aborted += 1
        self.emit(ENGINE, "session.end", session=s.session_id, phase=s.phase.value, reason=s.abort_reason,
                  total=s.total, amount_B=s.amount_B)
        self.check_invariants(s)

    # -- actions

    def _reject(self, actor: str, kind: str, reason: str) -> None:
        self.metrics.rejected_actions += 1
        self.emit(actor, "reject", action=kind, reason=reason)

    def _execute(self, actor: Actor, action: Action) -> None:
        handler = getattr(self, f"_do_{action.kind}")
        try:
            payload = handler(actor, **action.args)
        except XchxError as exc:
            self._reject(actor.id, action.kind, str(exc))
            return
        if payload is not None:
            self.emit(actor.id, action.kind, **payload)

    def _do_prepare(self, actor, trade):
        t = self.scenario.trades[trade]
        intent = TradeIntent(t.payer, t.payee, t.asset_in, t.asset_out, t.amount, t.c1, t.c2)
        return {"trade": trade, "session": self.tc.prepare(intent, self.now), "amount": t.amount}

    def _do_sybil_intent(self, actor, name, amount, c1, c2, asset_in, asset_out):
        party = Party.of(name)
        intent = TradeIntent(party, party, asset_in, asset_out, amount, c1, c2)
        return {"as": name, "session": self.tc.prepare(intent, self.now), "amount": amount}

    def _do_register(self, actor, id):
        self.registry.register(IntermediaryRecord(id, genesis=False))
        return {"id": id}

    def _do_pay(self, actor, ref, chain, sender, to, amount):
        tx_id = self.ledgers[chain].transfer(sender, to, amount)
        if hasattr(actor, "on_paid"):
            actor.on_paid(ref, tx_id)
        self.emit(actor.id, "pay", ref=ref, chain=chain, tx_id=tx_id, to=to, amount=amount)
        self._execute(actor, Action("claim", {"ref": ref, "tx_id": tx_id}))
        return None

    def _do_claim(self, actor, ref, tx_id):
        self.tc.claim(ref, tx_id, actor.id)
        return {"ref": ref, "tx_id": tx_id}

    def _do_reorg(self, actor, chain, depth, tx_id, sink):
        led = self.ledgers[chain]
        orig = led.get_transfer(tx_id)
        repl = led.new_transfer(orig.sender, sink, orig.amount, nonce=orig.nonce)
        dropped = led.reorg(depth, [repl])
        self.metrics.reorgs += 1
        return {"chain": chain, "depth": depth, "dropped": [t.tx_id for t in dropped], "replacement": repl.tx_id}

    def _do_select(self, actor, session, accepted, min_amount):
        self.tc.select(actor.id, session, accepted, min_amount, self.now)
        return {"session": session, "accepted": accepted}

    def _do_deposit(self, actor, session, amount):
        self.tc.deposit(actor.id, session, amount, self.now)
        return {"session": session, "amount": amount}

    def _do_update(self, actor, rates):
        self.registry.update(actor.id, rates=rates)
        return {"pairs": [f"{a}->{b}@{r}" for (a, b), r in sorted(rates.items())]}

    def _do_vote(self, actor, ref, verdict):
        self.committee.submit_vote(actor.id, ref, verdict)
        return {"ref": ref, "verdict": verdict}

    def _do_deny(self, actor, ref):
        self.tc.deny(ref, actor.id)
        return {"ref": ref}

    # -- invariants

    def check_invariants(self, session: Optional[TradeSession] = None) -> None:
        for cid, led in self.ledgers.items():
            if sum(led.balances.values()) != self.supply[cid]:
                raise InvariantViolation(f"conservation:{cid}",
                                         f"supply {sum(led.balances.values())} != {self.supply[cid]}")
            replayed, _ = led._replay(led.chain)
            if {k: v for k, v in replayed.items() if v} != {k: v for k, v in led.balances.items() if v}:
                raise InvariantViolation(f"replay:{cid}", "balances differ from a replay of the canonical chain")
            if any(v < 0 for v in led.balances.values()):
                raise InvariantViolation(f"non-negative:{cid}")
        if self.tc is not None:
            held = sum(s.escrow_remaining for s in self.tc.sessions.values())
            if self.ether.balance(self.tc.ESCROW) != held:
                raise InvariantViolation("escrow-balance",
                                         f"TC holds {self.ether.balance(self.tc.ESCROW)}, sessions account for {held}")
            staked = sum(sum(ep.stakes.values()) for ep in self.committee.epochs.values())
            if self.ether.balance(self.committee.ESCROW) != staked:
                raise InvariantViolation("committee-escrow",
                                         f"IC holds {self.ether.balance(self.committee.ESCROW)}, stakes are {staked}")
        if session is not None:
            self._check_session(session)
        self.metrics.conservation_checks_passed += 1
        self.emit(ENGINE, "invariants.ok", session=None if session is None else session.session_id)

    def _check_session(self, s: TradeSession) -> None:
        ins = sum(m.amount for m in s.movements if m.kind == "deposit")
        outs = sum(m.amount for m in s.movements if m.kind != "deposit")
        if s.phase.terminal and (s.escrow_remaining != 0 or ins != outs):
            raise InvariantViolation("escrow-zero-sum",
                                     f"session {s.session_id}: in {ins}, out {outs}, left {s.escrow_remaining}")
        if s.phase.value == "Settled":
            confirmed = [n for n, o in s.payee_outcomes.items() if o is Outcome.CONFIRMED]
            failed = [n for n, o in s.payee_outcomes.items() if o is Outcome.FAILED]
            back = [m for m in s.movements if m.kind == "return_c2"]
            forfeit = [m for m in s.movements if m.kind == "forfeit_to_payee"]
            ok = (len(back) == sum(1 for n in confirmed if s.payee_slice[n] > 0)
                  and len(forfeit) == sum(1 for n in failed if s.payee_slice[n] > 0)
                  and sum(m.amount for m in back + forfeit) == sum(s.payee_slice.values())
                  and len(confirmed) + len(failed) == len(s.payee_slice))
            if not ok:
                raise InvariantViolation("payee-atomicity", f"session {s.session_id}")

    # -- end of run

    def _finish(self) -> None:
        if self.committee is not None:
            for ref in self.committee.outstanding():
                self.metrics.unresolved_transfers += 1
                self.emit(ENGINE, "unresolved", ref=ref)
            for eid, ep in sorted(self.committee.epochs.items()):
                if not ep.closed:
                    returned = self.committee.close_epoch(eid, force=True)
                    self.emit(ENGINE, "epoch.close", epoch=eid, returned=returned)
            for ref, (verdict, eid, tx_id) in self._verdicts.items():
                truth = self.transfer_holds(ref, tx_id)
                wrong = (verdict is Verdict.CONFIRMED) != truth
                if wrong:
                    self.metrics.wrong_finalizations += 1
                    if verdict is Verdict.CONFIRMED:
                        self.metrics.wrong_confirmed += 1
                self.emit(ENGINE, "audit", ref=ref, verdict=verdict, truth=truth, wrong=wrong, tx_id=tx_id)
        self.check_invariants()
        self.emit(ENGINE, "end", height={cid: led.height for cid, led in self.ledgers.items()})


def run(scenario: Scenario, seed: Optional[int] = None, **kwargs) -> RunResult:
    """Execute ``scenario`` to quiescence or its duration. Deterministic in (scenario, seed)."""
    return Engine(scenario, seed, **kwargs).run()
