"""Monte Carlo checks of committee safety against the exact binomial tail."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from ..analysis import binomial_cdf
from ..committee import MAX_TARGET, Committee, PowParams, Verdict, solve_pow
from ..contracts import IntermediaryRecord, IntermediaryRegistry
from ..gas import GasLedger
from ..ledger import ChainConfig, Ledger


def byzantine_counts(w: int, p: float, trials: int, seed: int) -> np.ndarray:
    """Number of Byzantine members in each of ``trials`` committees of size ``w``."""
    rng = np.random.default_rng(seed)
    return (rng.random((trials, w)) < p).sum(axis=1)


def empirical_cdf(counts: np.ndarray, c: int) -> float:
    return float(np.mean(counts <= c))


@dataclass(frozen=True)
class SweepResult:
    tallies: int
    wrong: int
    escalated: int
    expected_rate: Optional[float]

    @property
    def rate(self) -> float:
        return self.wrong / self.tallies

    @property
    def sigma(self) -> float:
        e = self.expected_rate if self.expected_rate is not None else self.rate
        return math.sqrt(e * (1 - e) / self.tallies)


def committee_sweep(w: int, a: int, p: float, tallies: int, seed: int,
                    lie_probability: float = 1.0, stake: int = 10) -> SweepResult:
    """Tally one transfer per freshly drawn committee and count wrong finalizations.

    Every trial runs through a real :class:`Committee`: members register, pass
    Verify_PoW against a trivially easy target, vote, and are tallied.
    """
    rng = random.Random(seed)
    wrong = escalated = 0
    for trial in range(tallies):
        members = [f"m{i}" for i in range(w)]
        byzantine = {m for m in members if rng.random() < p}
        ether = Ledger(ChainConfig("ETH", 1.0, 1, {m: stake for m in members}))
        gas = GasLedger()
        registry = IntermediaryRegistry(gas)
        for m in members:
            registry.register(IntermediaryRecord(m, genesis=True))
        committee = Committee(PowParams(MAX_TARGET, committee_cap=w), registry, ether, gas, threshold_a=a)
        committee.open_epoch(0)
        for m in members:
            committee.verify_pow(m, 0, solve_pow(m, 0, MAX_TARGET), stake)
        truth = Verdict.CONFIRMED if rng.random() < 0.5 else Verdict.FAILED
        ref = ("sweep", trial)
        committee.assign(ref)
        for m in members:
            lie = m in byzantine and rng.random() < lie_probability
            committee.submit_vote(m, ref, truth.inverse() if lie else truth)
        res = committee.tally(ref)
        if res.escalated:
            escalated += 1
        elif res.verdict is not truth:
            wrong += 1
    expected = None
    if lie_probability == 1:
        expected = float(1 - binomial_cdf(w, a, Fraction(p)))
    return SweepResult(tallies, wrong, escalated, expected)
