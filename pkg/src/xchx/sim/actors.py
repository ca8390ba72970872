"""
Scripted honest and adversarial behaviours.

An actor never mutates module state itself. Each ``step`` looks at the
public world and returns :class:`Action` requests that the engine executes
(and rejects, if the target module refuses them).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Set

from ..committee import Verdict
from ..contracts import Outcome, Phase, TransferRef, screen_intents
from .scenario import BEHAVIOR_PARAMS, ActorSpec, Behavior, IntermediarySeed, TradeSeed

if TYPE_CHECKING:
    from .engine import Engine


@dataclass
class Action:
    kind: str
    args: Dict[str, Any] = field(default_factory=dict)


class Actor:
    def __init__(self, actor_id: str, behavior: Behavior):
        self.id = actor_id
        self.behavior = behavior
        self.params = dict(behavior.params)

    @property
    def kind(self) -> str:
        return self.behavior.kind

    def step(self, world: "Engine", rng: random.Random) -> List[Action]:
        return []

    def next_wake(self, now: int) -> Optional[int]:
        return None

    def finished(self, world: "Engine") -> bool:
        return True


class Payer(Actor):
    """HonestPayer, FalseClaimPayer and DoubleSpendPayer."""

    def __init__(self, actor_id: str, behavior: Behavior, trades: List[TradeSeed]):
        super().__init__(actor_id, behavior)
        self.trades = [(i, t) for i, t in enumerate(trades) if t.payer.name == actor_id]
        self.prepared: Set[int] = set()
        self.paid: Set[TransferRef] = set()
        self.payments: Dict[TransferRef, str] = {}
        self.reorged: Set[TransferRef] = set()

    def step(self, world, rng):
        actions = []
        for i, t in self.trades:
            if i not in self.prepared and world.now >= int(t.at_s * 1000):
                self.prepared.add(i)
                actions.append(Action("prepare", {"trade": i}))
        for s in world.tc.sessions.values():
            if s.phase is not Phase.AWAIT_PAYER_TRANSFERS:
                continue
            for i in sorted(s.slices):
                ref = s.payer_ref(i)
                if s.intents[i].payer.name != self.id or ref in self.paid:
                    continue
                if s.payer_outcomes[i] is not Outcome.PENDING:
                    continue
                self.paid.add(ref)
                if self.kind == "FalseClaimPayer":
                    actions.append(Action("claim", {"ref": ref, "tx_id": f"{s.asset_in}-forged-{ref}"}))
                else:
                    chain, _, to, amount = world.tc.expected(ref)
                    actions.append(Action("pay", {"ref": ref, "chain": chain, "sender": s.intents[i].payer.coin,
                                                  "to": to, "amount": amount}))
        if self.kind == "DoubleSpendPayer":
            depth_needed = self.params["reorg_depth"]
            for ref, tx_id in self.payments.items():
                if ref in self.reorged:
                    continue
                chain = world.tc.expected(ref)[0]
                if world.ledgers[chain].confirmation_depth(tx_id) == depth_needed:
                    self.reorged.add(ref)
                    sink = self.params["sink"] or f"{self.id}.alt"
                    actions.append(Action("reorg", {"chain": chain, "depth": depth_needed,
                                                    "tx_id": tx_id, "sink": sink}))
        return actions

    def on_paid(self, ref: TransferRef, tx_id: str) -> None:
        self.payments[ref] = tx_id

    def next_wake(self, now):
        times = [int(t.at_s * 1000) for i, t in self.trades if i not in self.prepared]
        times = [x for x in times if x > now]
        return min(times) if times else None

    def finished(self, world):
        return len(self.prepared) == len(self.trades)


class Payee(Actor):
    def __init__(self, actor_id, behavior):
        super().__init__(actor_id, behavior)
        self.denied: Set[TransferRef] = set()

    def step(self, world, rng):
        if self.kind != "FalseDenialPayee":
            return []
        actions = []
        for s in world.tc.sessions.values():
            for ref in s.claims:
                if ref.side == "payee" and ref.key == self.id and ref not in self.denied:
                    self.denied.add(ref)
                    actions.append(Action("deny", {"ref": ref}))
        return actions


class Intermediary(Actor):
    """HonestIntermediary and AbscondingIntermediary."""

    def __init__(self, actor_id, behavior, seed: IntermediarySeed):
        super().__init__(actor_id, behavior)
        self.seed = seed
        self.updates_done = 0
        self.paid: Set[TransferRef] = set()

    def _skips(self, stage: str) -> bool:
        return self.kind == "AbscondingIntermediary" and self.params["skip"] == stage

    def step(self, world, rng):
        actions = []
        while (self.updates_done < len(self.seed.updates)
               and world.now >= int(self.seed.updates[self.updates_done].at_s * 1000)):
            actions.append(Action("update", {"rates": self.seed.updates[self.updates_done].rates}))
            self.updates_done += 1
        for s in world.tc.sessions.values():
            if self.id not in (s.c1, s.c2):
                continue
            if s.phase is Phase.AWAIT_SELECTION and self.id not in s.selections:
                accepted = screen_intents(s, world.ledgers[s.asset_in], self.params["min_amount"])
                actions.append(Action("select", {"session": s.session_id, "accepted": accepted,
                                                 "min_amount": self.params["min_amount"]}))
            elif s.phase is Phase.AWAIT_DEPOSITS and self.id not in s.deposited and not self._skips("deposit"):
                actions.append(Action("deposit", {"session": s.session_id, "amount": s.required_deposit}))
            elif s.phase is Phase.AWAIT_PAYEE_TRANSFERS and self.id == s.c2 and not self._skips("payout"):
                for name in s.payee_outcomes:
                    ref = s.payee_ref(name)
                    if ref in self.paid or ref in s.claims or s.payee_due[name] <= 0:
                        continue
                    self.paid.add(ref)
                    chain, sender, to, amount = world.tc.expected(ref)
                    actions.append(Action("pay", {"ref": ref, "chain": chain, "sender": sender,
                                                  "to": to, "amount": amount}))
        return actions

    def next_wake(self, now):
        if self.updates_done < len(self.seed.updates):
            t = int(self.seed.updates[self.updates_done].at_s * 1000)
            return t if t > now else None
        return None

    def finished(self, world):
        return self.updates_done == len(self.seed.updates)


class Validator(Actor):
    """HonestValidator and ByzantineValidator; both vote when the honest verdict becomes knowable."""

    @property
    def hash_rate(self) -> float:
        return float(self.params["hash_rate"])

    def step(self, world, rng):
        actions = []
        for ref in world.refs_awaiting_vote(self.id):
            honest = world.honest_verdict(ref)
            if honest is None:
                continue
            verdict = honest
            if self.kind == "ByzantineValidator" and rng.random() < self.params["lie_probability"]:
                verdict = honest.inverse()
            actions.append(Action("vote", {"ref": ref, "verdict": verdict}))
        return actions


class SybilSpawner(Actor):
    def __init__(self, actor_id, behavior, trades: List[TradeSeed]):
        super().__init__(actor_id, behavior)
        self.template = trades[0] if trades else None
        self.done = False

    def step(self, world, rng):
        if self.done or world.now < int(self.params["at_s"] * 1000):
            return []
        self.done = True
        actions = []
        for k in range(self.params["spawn_count"]):
            name = f"{self.id}#{k}"
            actions.append(Action("register", {"id": name}))
            if self.template is not None:
                t = self.template
                actions.append(Action("sybil_intent", {
                    "name": name,
                    "amount": self.params["amount"],
                    "c1": self.params["c1"] or t.c1,
                    "c2": self.params["c2"] or t.c2,
                    "asset_in": self.params["asset_in"] or t.asset_in,
                    "asset_out": self.params["asset_out"] or t.asset_out,
                }))
        return actions

    def next_wake(self, now):
        t = int(self.params["at_s"] * 1000)
        return t if not self.done and t > now else None

    def finished(self, world):
        return self.done


def actor_step(actor: Actor, world: "Engine", rng: random.Random) -> List[Action]:
    return actor.step(world, rng)


def build_actors(scenario) -> Dict[str, Actor]:
    """One actor per participant; participants without an explicit behaviour act honestly."""
    specs: Dict[str, ActorSpec] = {a.id: a for a in scenario.actors}
    actors: Dict[str, Actor] = {}

    def behavior(aid: str, default: str) -> Behavior:
        return specs[aid].behavior if aid in specs else Behavior(default, dict(BEHAVIOR_PARAMS[default]))

    for seed in scenario.intermediaries:
        beh = behavior(seed.id, "HonestIntermediary")
        if beh.kind in ("HonestValidator", "ByzantineValidator"):
            actors[seed.id] = Validator(seed.id, beh)
        elif beh.kind in ("HonestIntermediary", "AbscondingIntermediary"):
            actors[seed.id] = Intermediary(seed.id, beh, seed)
    for t in scenario.trades:
        if t.payer.name not in actors:
            actors[t.payer.name] = Payer(t.payer.name, behavior(t.payer.name, "HonestPayer"), scenario.trades)
        if t.payee.name not in actors:
            actors[t.payee.name] = Payee(t.payee.name, behavior(t.payee.name, "HonestPayee"))
    for spec in scenario.actors:
        if spec.behavior.kind == "SybilSpawner":
            actors[spec.id] = SybilSpawner(spec.id, spec.behavior, scenario.trades)
    return dict(sorted(actors.items()))
