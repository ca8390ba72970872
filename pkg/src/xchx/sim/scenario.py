"""Scenario files: JSON in, validated dataclasses out."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from ..committee import HASH_SPACE
from ..contracts import Party, SessionConfig
from ..errors import ConfigError
from ..gas import validate_gas_table
from ..ledger import ChainConfig

TOP_LEVEL = ("chains", "intermediaries", "trades", "committee", "gas_table", "actors", "seed", "duration_s")
OPTIONAL_TOP_LEVEL = ("session", "name")

BEHAVIOR_PARAMS: Dict[str, Dict[str, Any]] = {
    "HonestPayer": {},
    "FalseClaimPayer": {},
    "DoubleSpendPayer": {"reorg_depth": 3, "sink": None},
    "HonestPayee": {},
    "FalseDenialPayee": {},
    "HonestIntermediary": {"min_amount": 1},
    "AbscondingIntermediary": {"min_amount": 1, "skip": "payout"},
    "HonestValidator": {"hash_rate": 1.0},
    "ByzantineValidator": {"hash_rate": 1.0, "lie_probability": 1.0},
    "SybilSpawner": {"spawn_count": 5, "amount": 1, "at_s": 0, "c1": None, "c2": None,
                     "asset_in": None, "asset_out": None},
}
VALIDATOR_KINDS = ("HonestValidator", "ByzantineValidator")
PAYER_KINDS = ("HonestPayer", "FalseClaimPayer", "DoubleSpendPayer")
PAYEE_KINDS = ("HonestPayee", "FalseDenialPayee")
INTERMEDIARY_KINDS = ("HonestIntermediary", "AbscondingIntermediary")


@dataclass(frozen=True)
class Behavior:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ActorSpec:
    id: str
    behavior: Behavior


@dataclass
class RateUpdate:
    at_s: float
    rates: Dict[Tuple[str, str], Fraction]


@dataclass
class IntermediarySeed:
    id: str
    coin_addresses: Dict[str, str]
    rates: Dict[Tuple[str, str], Fraction]
    genesis: bool = True
    updates: List[RateUpdate] = field(default_factory=list)


@dataclass
class TradeSeed:
    payer: Party
    payee: Party
    asset_in: str
    asset_out: str
    amount: int
    c1: str
    c2: str
    at_s: float = 0


@dataclass
class CommitteeConfig:
    w: int = 10
    a: Optional[int] = None
    min_stake: int = 1
    stake: Optional[int] = None
    epoch_length_s: int = 600
    initial_target: int = 2 ** 252
    retarget: bool = True
    retarget_clamp: int = 4

    @property
    def threshold_a(self) -> int:
        return self.w // 2 if self.a is None else self.a

    @property
    def stake_amount(self) -> int:
        return self.min_stake if self.stake is None else self.stake


@dataclass
class Scenario:
    chains: List[ChainConfig]
    ether_chain: str
    intermediaries: List[IntermediarySeed]
    trades: List[TradeSeed]
    committee: CommitteeConfig
    gas_table: Dict[str, int]
    actors: List[ActorSpec]
    seed: int
    duration_s: float
    session: SessionConfig = field(default_factory=SessionConfig)
    name: str = ""

    def chain(self, chain_id: str) -> ChainConfig:
        for c in self.chains:
            if c.chain_id == chain_id:
                return c
        raise KeyError(chain_id)

    def behavior_of(self, actor_id: str) -> Optional[Behavior]:
        for a in self.actors:
            if a.id == actor_id:
                return a.behavior
        return None


# -- parsing helpers; each raises ConfigError naming the offending path

def _expect(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _int(v: Any, path: str, minimum: Optional[int] = None) -> int:
    _expect(isinstance(v, int) and not isinstance(v, bool), path, "must be an integer")
    if minimum is not None:
        _expect(v >= minimum, path, f"must be >= {minimum}")
    return v


def _num(v: Any, path: str, positive: bool = False) -> float:
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), path, "must be a number")
    if positive:
        _expect(v > 0, path, "must be > 0")
    return v


def _str(v: Any, path: str) -> str:
    _expect(isinstance(v, str) and v != "", path, "must be a non-empty string")
    return v


def _rate(v: Any, path: str) -> Fraction:
    try:
        r = Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{path}: not a rational rate") from None
    _expect(r > 0, path, "rate must be > 0")
    return r


def _pairs(v: Any, path: str) -> Dict[Tuple[str, str], Fraction]:
    _expect(isinstance(v, list), path, "must be a list of [asset_in, asset_out, rate]")
    out = {}
    for i, item in enumerate(v):
        p = f"{path}[{i}]"
        _expect(isinstance(item, list) and len(item) in (2, 3), p, "must be [asset_in, asset_out, rate]")
        rate = _rate(item[2], f"{p}[2]") if len(item) == 3 else Fraction(1)
        out[(_str(item[0], f"{p}[0]"), _str(item[1], f"{p}[1]"))] = rate
    return out


def _party(v: Any, path: str) -> Party:
    if isinstance(v, str):
        return Party.of(_str(v, path))
    _expect(isinstance(v, dict), path, "must be a name or {name, eth, coin}")
    name = _str(v.get("name"), f"{path}.name")
    return Party(name, _str(v.get("eth", name), f"{path}.eth"), _str(v.get("coin", name), f"{path}.coin"))


def _chain(d: Any, path: str) -> Tuple[ChainConfig, bool]:
    _expect(isinstance(d, dict), path, "must be an object")
    cid = _str(d.get("chain_id"), f"{path}.chain_id")
    is_ether = d.get("ether", False)
    _expect(isinstance(is_ether, bool), f"{path}.ether", "must be a boolean")
    balances = d.get("initial_balances", {})
    _expect(isinstance(balances, dict), f"{path}.initial_balances", "must be an object")
    for acct, amount in balances.items():
        _int(amount, f"{path}.initial_balances.{acct}", minimum=0)
    k = _int(d.get("confirmation_depth", 1 if is_ether else 6), f"{path}.confirmation_depth", minimum=1)
    interval = _num(d.get("block_interval_s"), f"{path}.block_interval_s", positive=True)
    decimals = _int(d.get("decimals", 8), f"{path}.decimals", minimum=0)
    return ChainConfig(cid, interval, k, dict(balances), decimals), is_ether


def _behavior(d: Any, path: str) -> Behavior:
    kind = d.get("behavior")
    _expect(kind in BEHAVIOR_PARAMS, f"{path}.behavior", f"unknown behavior kind {kind!r}")
    raw = d.get("params", {})
    _expect(isinstance(raw, dict), f"{path}.params", "must be an object")
    defaults = BEHAVIOR_PARAMS[kind]
    for key in raw:
        _expect(key in defaults, f"{path}.params.{key}", f"not a parameter of {kind}")
    params = {**defaults, **raw}
    pp = f"{path}.params"
    if kind == "DoubleSpendPayer":
        _int(params["reorg_depth"], f"{pp}.reorg_depth", minimum=1)
    if kind in VALIDATOR_KINDS:
        _num(params["hash_rate"], f"{pp}.hash_rate", positive=True)
    if kind == "ByzantineValidator":
        lp = _num(params["lie_probability"], f"{pp}.lie_probability")
        _expect(0 <= lp <= 1, f"{pp}.lie_probability", "must be in [0, 1]")
    if kind in INTERMEDIARY_KINDS:
        _int(params["min_amount"], f"{pp}.min_amount", minimum=0)
    if kind == "AbscondingIntermediary":
        _expect(params["skip"] in ("payout", "deposit"), f"{pp}.skip", "must be 'payout' or 'deposit'")
    if kind == "SybilSpawner":
        _int(params["spawn_count"], f"{pp}.spawn_count", minimum=0)
        _int(params["amount"], f"{pp}.amount", minimum=1)
        _num(params["at_s"], f"{pp}.at_s")
    return Behavior(kind, params)


def scenario_from_dict(data: Any) -> Scenario:
    _expect(isinstance(data, dict), "$", "scenario must be a JSON object")
    for key in data:
        _expect(key in TOP_LEVEL or key in OPTIONAL_TOP_LEVEL, key, "unknown top-level key")
    for key in ("chains", "seed", "duration_s"):
        _expect(key in data, key, "missing")

    _expect(isinstance(data["chains"], list) and data["chains"], "chains", "must be a non-empty list")
    chains, ether = [], []
    for i, c in enumerate(data["chains"]):
        cfg, is_ether = _chain(c, f"chains[{i}]")
        _expect(all(x.chain_id != cfg.chain_id for x in chains), f"chains[{i}].chain_id",
                f"duplicate chain_id {cfg.chain_id!r}")
        chains.append(cfg)
        if is_ether:
            ether.append(cfg.chain_id)
    _expect(len(ether) == 1, "chains", f"exactly one chain must be marked ether (found {len(ether)})")
    chain_ids = {c.chain_id for c in chains}
    known_accounts: Dict[str, set] = {c.chain_id: set(c.initial_balances) for c in chains}

    def account_exists(chain_id: str, account: str, path: str) -> None:
        _expect(account in known_accounts.get(chain_id, ()), path,
                f"account {account!r} not in initial_balances of chain {chain_id!r}")

    intermediaries = []
    ids = set()
    for i, d in enumerate(data.get("intermediaries", [])):
        p = f"intermediaries[{i}]"
        _expect(isinstance(d, dict), p, "must be an object")
        iid = _str(d.get("id"), f"{p}.id")
        _expect(iid not in ids, f"{p}.id", f"duplicate intermediary {iid!r}")
        ids.add(iid)
        account_exists(ether[0], iid, f"{p}.id")
        coin = d.get("coin_addresses", {})
        _expect(isinstance(coin, dict), f"{p}.coin_addresses", "must be an object")
        for cid, acct in coin.items():
            _expect(cid in chain_ids, f"{p}.coin_addresses.{cid}", "unknown chain")
            account_exists(cid, _str(acct, f"{p}.coin_addresses.{cid}"), f"{p}.coin_addresses.{cid}")
        rates = _pairs(d.get("pairs", []), f"{p}.pairs")
        for (a, b) in rates:
            _expect(a in chain_ids and b in chain_ids, f"{p}.pairs", f"unknown asset in ({a}, {b})")
        genesis = d.get("genesis", True)
        _expect(isinstance(genesis, bool), f"{p}.genesis", "must be a boolean")
        updates = []
        for j, u in enumerate(d.get("updates", [])):
            up = f"{p}.updates[{j}]"
            _expect(isinstance(u, dict), up, "must be an object")
            updates.append(RateUpdate(_num(u.get("at_s"), f"{up}.at_s"), _pairs(u.get("pairs", []), f"{up}.pairs")))
        intermediaries.append(IntermediarySeed(iid, dict(coin), rates, genesis, updates))

    trades = []
    for i, d in enumerate(data.get("trades", [])):
        p = f"trades[{i}]"
        _expect(isinstance(d, dict), p, "must be an object")
        payer, payee = _party(d.get("payer"), f"{p}.payer"), _party(d.get("payee"), f"{p}.payee")
        asset_in, asset_out = _str(d.get("asset_in"), f"{p}.asset_in"), _str(d.get("asset_out"), f"{p}.asset_out")
        for name, cid in (("asset_in", asset_in), ("asset_out", asset_out)):
            _expect(cid in chain_ids and cid != ether[0], f"{p}.{name}", f"unknown coin chain {cid!r}")
        account_exists(asset_in, payer.coin, f"{p}.payer")
        account_exists(ether[0], payer.eth, f"{p}.payer")
        account_exists(asset_out, payee.coin, f"{p}.payee")
        account_exists(ether[0], payee.eth, f"{p}.payee")
        c1, c2 = _str(d.get("c1"), f"{p}.c1"), _str(d.get("c2"), f"{p}.c2")
        for name, iid in (("c1", c1), ("c2", c2)):
            _expect(iid in ids, f"{p}.{name}", f"unknown intermediary {iid!r}")
        trades.append(TradeSeed(payer, payee, asset_in, asset_out,
                                _int(d.get("amount"), f"{p}.amount", minimum=1), c1, c2,
                                _num(d.get("at_s", 0), f"{p}.at_s")))

    cd = data.get("committee", {})
    _expect(isinstance(cd, dict), "committee", "must be an object")
    allowed = set(CommitteeConfig.__dataclass_fields__)
    for key in cd:
        _expect(key in allowed, f"committee.{key}", "unknown key")
    target = cd.get("initial_target", CommitteeConfig.initial_target)
    if isinstance(target, str):
        try:
            target = int(target, 0)
        except ValueError:
            raise ConfigError("committee.initial_target: not an integer") from None
    _int(target, "committee.initial_target")
    _expect(0 < target < HASH_SPACE, "committee.initial_target", "must satisfy 0 < target < 2^256")
    committee = CommitteeConfig(
        w=_int(cd.get("w", 10), "committee.w", minimum=3),
        a=None if cd.get("a") is None else _int(cd["a"], "committee.a", minimum=0),
        min_stake=_int(cd.get("min_stake", 1), "committee.min_stake", minimum=1),
        stake=None if cd.get("stake") is None else _int(cd["stake"], "committee.stake", minimum=1),
        epoch_length_s=_int(cd.get("epoch_length_s", 600), "committee.epoch_length_s", minimum=1),
        initial_target=target,
        retarget=cd.get("retarget", True),
        retarget_clamp=_int(cd.get("retarget_clamp", 4), "committee.retarget_clamp", minimum=1),
    )
    _expect(committee.threshold_a < committee.w, "committee.a", "must be < w")
    _expect(isinstance(committee.retarget, bool), "committee.retarget", "must be a boolean")

    gas_table = validate_gas_table(data.get("gas_table", {}))

    actors = []
    actor_ids = set()
    for i, d in enumerate(data.get("actors", [])):
        p = f"actors[{i}]"
        _expect(isinstance(d, dict), p, "must be an object")
        aid = _str(d.get("id"), f"{p}.id")
        _expect(aid not in actor_ids, f"{p}.id", f"duplicate actor {aid!r}")
        actor_ids.add(aid)
        beh = _behavior(d, p)
        if beh.kind in VALIDATOR_KINDS or beh.kind in INTERMEDIARY_KINDS:
            _expect(aid in ids, f"{p}.id", f"{beh.kind} must be a declared intermediary")
        if beh.kind in PAYER_KINDS:
            _expect(any(t.payer.name == aid for t in trades), f"{p}.id", "payer behavior without a trade")
        if beh.kind in PAYEE_KINDS:
            _expect(any(t.payee.name == aid for t in trades), f"{p}.id", "payee behavior without a trade")
        actors.append(ActorSpec(aid, beh))

    seed = _int(data["seed"], "seed", minimum=0)
    _expect(seed < 2 ** 64, "seed", "must fit in 64 bits")
    duration = _num(data["duration_s"], "duration_s", positive=True)

    sd = data.get("session", {})
    _expect(isinstance(sd, dict), "session", "must be an object")
    for key in sd:
        _expect(key in ("cap", "collect_window_s", "phase_window_s", "fee_bps"), f"session.{key}", "unknown key")
    session = SessionConfig(
        cap=_int(sd.get("cap", 10), "session.cap", minimum=1),
        collect_window_ms=int(round(_num(sd.get("collect_window_s", 600), "session.collect_window_s", True) * 1000)),
        phase_window_ms=int(round(_num(sd.get("phase_window_s", 3600), "session.phase_window_s", True) * 1000)),
        fee_bps=_int(sd.get("fee_bps", 0), "session.fee_bps", minimum=0),
    )
    _expect(session.fee_bps < 10_000, "session.fee_bps", "must be < 10000")
    name = data.get("name", "")
    return Scenario(chains, ether[0], intermediaries, trades, committee, gas_table, actors,
                    seed, duration, session, name if isinstance(name, str) else "")


def load_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: malformed JSON ({exc})") from exc
    return scenario_from_dict(data)


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return load_scenario(text)
