"""Event trace, its content hash, and the metric counters derived from it."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List


@dataclass(frozen=True)
class Event:
    t_ms: int
    seq: int
    actor: str
    action: str
    payload: Dict[str, Any]

    def line(self) -> str:
        return json.dumps({"t_ms": self.t_ms, "actor": self.actor, "action": self.action,
                           "payload": self.payload}, sort_keys=True, separators=(",", ":"))


@dataclass
class Trace:
    events: List[Event] = field(default_factory=list)

    def append(self, t_ms: int, actor: str, action: str, payload: Dict[str, Any]) -> Event:
        if self.events and t_ms < self.events[-1].t_ms:
            raise ValueError("events must be appended in time order")
        ev = Event(t_ms, len(self.events), actor, action, payload)
        self.events.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def of(self, action: str) -> List[Event]:
        return [e for e in self.events if e.action == action]

    def jsonl(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)

    @property
    def hash(self) -> str:
        h = hashlib.sha256()
        for e in self.events:
            h.update(e.line().encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass
class Metrics:
    sessions_settled: int = 0
    sessions_aborted: int = 0
    tallies: int = 0
    finalizations: int = 0
    escalations: int = 0
    wrong_finalizations: int = 0
    wrong_confirmed: int = 0
    slashings: int = 0
    escrow_forfeitures: int = 0
    settlement_movements: int = 0
    conservation_checks_passed: int = 0
    admissions: int = 0
    reorgs: int = 0
    rejected_actions: int = 0
    unresolved_transfers: int = 0
    gas_total: int = 0
    gas_by_caller: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["gas_by_caller"] = dict(sorted(self.gas_by_caller.items()))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["counter", "value"])
        for k, v in self.to_dict().items():
            if k == "gas_by_caller":
                for caller, gas in v.items():
                    w.writerow([f"gas_by_caller.{caller}", gas])
            else:
                w.writerow([k, v])
        return buf.getvalue()


def collect_metrics(trace: Iterable[Event]) -> Metrics:
    """Recompute every counter from the events alone."""
    m = Metrics()
    for e in trace:
        p = e.payload
        a = e.action
        if a == "session.end":
            if p["phase"] == "Settled":
                m.sessions_settled += 1
            else:
                m.sessions_aborted += 1
        elif a == "tally":
            m.tallies += 1
            if p["verdict"] is None:
                m.escalations += 1
            else:
                m.finalizations += 1
        elif a == "audit":
            if p["wrong"]:
                m.wrong_finalizations += 1
                if p["verdict"] == "Confirmed":
                    m.wrong_confirmed += 1
        elif a == "slash":
            m.slashings += len(p["dissenters"])
        elif a == "escrow":
            if p["kind"] != "deposit":
                m.settlement_movements += 1
            if p["kind"] == "forfeit_to_payee":
                m.escrow_forfeitures += 1
        elif a == "invariants.ok":
            m.conservation_checks_passed += 1
        elif a == "admit":
            m.admissions += 1
        elif a == "reorg":
            m.reorgs += 1
        elif a == "reject":
            m.rejected_actions += 1
        elif a == "unresolved":
            m.unresolved_transfers += 1
        elif a == "gas":
            m.gas_total += p["gas"]
            m.gas_by_caller[p["caller"]] = m.gas_by_caller.get(p["caller"], 0) + p["gas"]
    return m
