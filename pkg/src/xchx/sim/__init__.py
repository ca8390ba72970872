"""Discrete-event simulation of cross-chain trades."""

from .actors import Action, actor_step, build_actors
from .engine import Engine, RunResult, run, solve_time_sample, substream
from .scenario import Scenario, load_scenario, load_scenario_file, scenario_from_dict
from .trace import Event, Metrics, Trace, collect_metrics

__all__ = [
    "Action", "Engine", "Event", "Metrics", "RunResult", "Scenario", "Trace", "actor_step", "build_actors",
    "collect_metrics", "load_scenario", "load_scenario_file", "run", "scenario_from_dict", "solve_time_sample",
    "substream",
]
