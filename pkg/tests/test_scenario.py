from __future__ import annotations

import copy
import json

import pytest

from conftest import SCENARIOS, scenario_dict
from xchx.errors import ConfigError
from xchx.sim.scenario import load_scenario, load_scenario_file, scenario_from_dict


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    sc = load_scenario_file(path)
    assert sc.ether_chain == "ETH"


def test_honest_fields():
    sc = load_scenario_file(SCENARIOS / "honest.json")
    assert [c.chain_id for c in sc.chains] == ["ETH", "BTC", "LTC"]
    assert sc.committee.w == 10 and sc.committee.threshold_a == 5
    assert sc.trades[0].amount == 5 and sc.seed == 7


def mutate(fn):
    d = scenario_dict("honest")
    fn(d)
    return d


CASES = [
    ("unknown top-level", lambda d: d.update(extra=1), "extra"),
    ("missing seed", lambda d: d.pop("seed"), "seed"),
    ("two ether chains", lambda d: d["chains"][1].update(ether=True), "chains"),
    ("no ether chain", lambda d: d["chains"][0].update(ether=False), "chains"),
    ("negative balance", lambda d: d["chains"][1]["initial_balances"].update(A=-1),
     "chains[1].initial_balances.A"),
    ("bad interval", lambda d: d["chains"][1].update(block_interval_s=0), "chains[1].block_interval_s"),
    ("duplicate chain", lambda d: d["chains"][2].update(chain_id="BTC"), "chains[2].chain_id"),
    ("payer missing", lambda d: d["trades"][0].update(payer="Z"), "trades[0].payer"),
    ("unknown c1", lambda d: d["trades"][0].update(c1="C9"), "trades[0].c1"),
    ("zero amount", lambda d: d["trades"][0].update(amount=0), "trades[0].amount"),
    ("ether as asset", lambda d: d["trades"][0].update(asset_in="ETH"), "trades[0].asset_in"),
    ("bad rate", lambda d: d["intermediaries"][0]["pairs"][0].__setitem__(2, "0"), "intermediaries[0].pairs"),
    ("unknown behavior", lambda d: d["actors"][0].update(behavior="Wizard"), "actors[0].behavior"),
    ("unknown param", lambda d: d["actors"][0].update(params={"speed": 1}), "actors[0].params.speed"),
    ("lie probability", lambda d: d["actors"].__setitem__(0, {"id": "V0", "behavior": "ByzantineValidator",
                                                               "params": {"lie_probability": 2}}),
     "actors[0].params.lie_probability"),
    ("a >= w", lambda d: d["committee"].update(a=10), "committee.a"),
    ("tiny w", lambda d: d["committee"].update(w=2), "committee.w"),
    ("target zero", lambda d: d["committee"].update(initial_target=0), "committee.initial_target"),
    ("committee key", lambda d: d["committee"].update(speed=3), "committee.speed"),
    ("gas key", lambda d: d.update(gas_table={"TC.Teleport": 1}), "TC.Teleport"),
    ("seed too big", lambda d: d.update(seed=2 ** 64), "seed"),
    ("duration", lambda d: d.update(duration_s=0), "duration_s"),
    ("session key", lambda d: d.update(session={"speed": 1}), "session.speed"),
    ("payer behaviour w/o trade", lambda d: d["actors"].append({"id": "Q", "behavior": "HonestPayer"}),
     "actors[10].id"),
]


@pytest.mark.parametrize("label,fn,path", CASES, ids=[c[0] for c in CASES])
def test_invalid_scenarios_name_the_path(label, fn, path):
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(mutate(fn))
    assert path in str(info.value)


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        load_scenario("{nope")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario_file(tmp_path / "absent.json")


def test_defaults_filled_for_behaviour_params():
    d = scenario_dict("double_spend")
    sc = scenario_from_dict(d)
    actor = next(a for a in sc.actors if a.behavior.kind == "DoubleSpendPayer")
    assert actor.behavior.params["reorg_depth"] == 3


def test_loader_does_not_mutate_input():
    d = scenario_dict("honest")
    before = copy.deepcopy(d)
    scenario_from_dict(d)
    assert d == before
    assert json.dumps(d, sort_keys=True) == json.dumps(before, sort_keys=True)
