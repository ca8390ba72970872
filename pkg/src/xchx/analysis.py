"""
Committee safety as an exact binomial tail.

With each elected member independently Byzantine with probability ``p``,
the chance that a committee of ``w`` holds at most ``c`` Byzantine members is
``sum_{k<=c} C(w,k) p^k (1-p)^(w-k)``. Everything here is computed with
:class:`fractions.Fraction`, so no floating point enters the sum.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

Number = Union[int, float, str, Fraction]

DEFAULT_P = Fraction(1, 4)

TABLE3_T = ("0.7", "0.6", "0.5", "0.4", "0.3")
TABLE3_W = (10, 20, 50, 100)

# published grid, (t, w) -> printed value
TABLE3_PUBLISHED: Dict[Tuple[str, int], str] = {
    ("0.7", 10): "0.9997", ("0.7", 20): "1.0000", ("0.7", 50): "1.0000", ("0.7", 100): "1.0000",
    ("0.6", 10): "0.9965", ("0.6", 20): "1.0000", ("0.6", 50): "1.0000", ("0.6", 100): "1.0000",
    ("0.5", 10): "0.9957", ("0.5", 20): "0.9992", ("0.5", 50): "1.0000", ("0.5", 100): "1.0000",
    ("0.4", 10): "0.9219", ("0.4", 20): "0.9784", ("0.4", 50): "0.9937", ("0.4", 100): "0.9997",
    ("0.3", 10): "0.7759", ("0.3", 20): "0.8034", ("0.3", 50): "0.8369", ("0.3", 100): "0.8962",
}
DISCREPANCY_TOL = Fraction(5, 10_000)


def as_fraction(x: Number) -> Fraction:
    """Exact rational from an int, decimal string, Fraction, or float (via its repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def fixed(x: Fraction, places: int) -> str:
    """Round half-even to ``places`` decimals and render without going through float."""
    scale = 10 ** places
    n = round(x * scale)
    sign = "-" if n < 0 else ""
    n = abs(n)
    if places == 0:
        return f"{sign}{n}"
    return f"{sign}{n // scale}.{n % scale:0{places}d}"


def binomial_pmf(w: int, k: int, p: Number) -> Fraction:
    p = as_fraction(p)
    return math.comb(w, k) * p ** k * (1 - p) ** (w - k)


def binomial_cdf(w: int, c: int, p: Number) -> Fraction:
    """P[X <= c] for X ~ Binomial(w, p), exactly."""
    p = as_fraction(p)
    if w < 0:
        raise ValueError("w must be >= 0")
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    if c < 0 or c > w:
        raise ValueError(f"c must satisfy 0 <= c <= w, got c={c}, w={w}")
    if c == w:
        return Fraction(1)
    q = 1 - p
    # one common denominator: sum C(w,k) p_num^k q_num^(w-k) / den^w
    pn, qn = p.numerator * q.denominator, q.numerator * p.denominator
    den = p.denominator * q.denominator
    if qn == 0:
        return Fraction(0)
    # term_{k+1} = term_k * (w-k) * pn / ((k+1) * qn), and that division is always exact
    term = qn ** w
    num = term
    for k in range(c):
        term = term * (w - k) * pn // ((k + 1) * qn)
        num += term
    return Fraction(num, den ** w)


@dataclass(frozen=True)
class SafetyQuery:
    w: int
    t: Fraction
    p: Fraction = DEFAULT_P

    def __post_init__(self):
        object.__setattr__(self, "t", as_fraction(self.t))
        object.__setattr__(self, "p", as_fraction(self.p))
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if not 0 <= self.t <= 1:
            raise ValueError("t must be in [0, 1]")
        if not 0 <= self.p <= 1:
            raise ValueError("p must be in [0, 1]")

    @property
    def c(self) -> int:
        return math.floor(self.w * self.t)


@dataclass(frozen=True)
class SafetyResult:
    c: int
    probability: Fraction

    @property
    def decimal(self) -> str:
        return fixed(self.probability, 6)


def committee_confidence(q: SafetyQuery) -> SafetyResult:
    return SafetyResult(q.c, binomial_cdf(q.w, q.c, q.p))


@dataclass(frozen=True)
class Table3Cell:
    t: str
    w: int
    probability: Fraction
    published: Fraction

    @property
    def delta(self) -> Fraction:
        return self.probability - self.published

    @property
    def flagged(self) -> bool:
        return abs(self.delta) > DISCREPANCY_TOL


def reproduce_table3(p: Number = DEFAULT_P) -> Tuple[List[Table3Cell], List[Table3Cell]]:
    """Full grid plus the cells that disagree with the published values by more than 5e-4."""
    cells = []
    for t in TABLE3_T:
        for w in TABLE3_W:
            res = committee_confidence(SafetyQuery(w, Fraction(t), as_fraction(p)))
            cells.append(Table3Cell(t, w, res.probability, Fraction(TABLE3_PUBLISHED[(t, w)])))
    return cells, [c for c in cells if c.flagged]


def table3_csv(cells: List[Table3Cell]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "w", "probability", "paper_value", "delta"])
    for c in cells:
        writer.writerow([c.t, c.w, fixed(c.probability, 4), fixed(c.published, 4), fixed(c.delta, 4)])
    return buf.getvalue()


def min_vote_threshold(w: int, p: Number, confidence: Number) -> Optional[int]:
    """Smallest usable threshold ``a`` (0 <= a < w) with P[X <= a] >= confidence.

    A verdict needs more than ``a`` matching votes, so it can only be forged
    when more than ``a`` members are Byzantine. None when no ``a`` below ``w``
    is safe enough.
    """
    confidence = as_fraction(confidence)
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    p = as_fraction(p)
    for a in range(w):
        if binomial_cdf(w, a, p) >= confidence:
            return a
    return None
