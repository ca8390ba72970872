from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from xchx.analysis import (TABLE3_T, TABLE3_W, SafetyQuery, binomial_cdf, binomial_pmf, committee_confidence,
                           fixed, min_vote_threshold, reproduce_table3, table3_csv)

Q = Fraction(1, 4)


def float_cdf(w, c, p):
    return math.fsum(math.comb(w, k) * p ** k * (1 - p) ** (w - k) for k in range(c + 1))


def test_cdf_ten_four_quarter_exact():
    got = binomial_cdf(10, 4, Q)
    assert got == Fraction(966654, 4 ** 10)
    assert fixed(got, 6) == "0.921873"
    assert fixed(got, 4) == "0.9219"


@pytest.mark.parametrize("w", [1, 7, 50])
def test_full_support(w):
    assert binomial_cdf(w, w, Fraction(3, 7)) == 1


def test_no_byzantine_mass():
    assert binomial_cdf(10, 0, 0) == 1


def test_c_out_of_range():
    with pytest.raises(ValueError):
        binomial_cdf(10, 11, Q)
    with pytest.raises(ValueError):
        binomial_cdf(10, -1, Q)
    with pytest.raises(ValueError):
        binomial_cdf(10, 2, Fraction(3, 2))


@pytest.mark.parametrize("t,expect", [("0.3", "0.775875"), ("0.6", "0.996494"), ("0.5", "0.980272"),
                                      ("0.4", "0.921873")])
def test_committee_confidence_w10(t, expect):
    # exact sums; each rounds to the published four-place cell where that cell agrees
    r = committee_confidence(SafetyQuery(10, Fraction(t)))
    assert r.c == int(10 * float(t) + 1e-9)
    assert r.decimal == expect


def test_query_validation():
    for bad in (dict(w=0, t=Fraction(1, 2)), dict(w=10, t=Fraction(3, 2)), dict(w=10, t=Q, p=-1)):
        with pytest.raises(ValueError):
            SafetyQuery(**bad)


def test_float_inputs_are_exact_decimals():
    assert SafetyQuery(10, 0.3).t == Fraction(3, 10)
    assert SafetyQuery(10, 0.3).c == 3


def test_table3_grid():
    cells, flagged = reproduce_table3()
    assert len(cells) == len(TABLE3_T) * len(TABLE3_W) == 20
    by_key = {(c.t, c.w): c for c in cells}
    assert fixed(by_key[("0.4", 10)].probability, 4) == "0.9219"
    assert fixed(by_key[("0.3", 10)].probability, 4) == "0.7759"
    assert not by_key[("0.4", 10)].flagged
    assert by_key[("0.5", 10)].flagged
    assert fixed(by_key[("0.5", 10)].probability, 4) == "0.9803"
    assert {(c.t, c.w) for c in flagged} == {("0.5", 10), ("0.5", 20), ("0.4", 20), ("0.3", 20)}


def test_table3_csv_shape():
    cells, _ = reproduce_table3()
    lines = table3_csv(cells).splitlines()
    assert lines[0] == "t,w,probability,paper_value,delta"
    assert len(lines) == 21
    t, w, prob, paper, delta = lines[1].split(",")
    assert (t, w) == ("0.7", "10")
    assert all(len(x.split(".")[1]) == 4 for x in (prob, paper))


def _sweep(w, p, conf):
    for a in range(w):
        if float_cdf(w, a, p) >= conf:
            return a
    return None


def test_min_threshold_w100():
    a = min_vote_threshold(100, Q, Fraction(99, 100))
    assert a == _sweep(100, 0.25, 0.99)
    # strictly fewer than four tenths of the seats suffice at this size
    assert a / 100 < 0.4
    assert binomial_cdf(100, 40, Q) >= Fraction(99, 100)


def test_min_threshold_trivial_cases():
    assert min_vote_threshold(10, 0, Fraction(99, 100)) == 0
    assert min_vote_threshold(10, 1, Fraction(1, 2)) is None
    with pytest.raises(ValueError):
        min_vote_threshold(10, Q, 1)


@given(st.integers(2, 60), st.fractions(0, 1, max_denominator=20), st.fractions(1, 99, max_denominator=100))
def test_min_threshold_matches_sweep(w, p, pct):
    conf = pct / 100
    got = min_vote_threshold(w, p, conf)
    want = next((a for a in range(w) if binomial_cdf(w, a, p) >= conf), None)
    assert got == want


@given(st.integers(1, 80), st.fractions(0, 1, max_denominator=50))
def test_monotone_in_c(w, p):
    values = [binomial_cdf(w, c, p) for c in range(w + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_monotone_in_t_on_grid():
    cells, _ = reproduce_table3()
    for w in TABLE3_W:
        column = [c.probability for c in cells if c.w == w]  # t descending
        assert all(a >= b for a, b in zip(column, column[1:]))


@given(st.integers(1, 100), st.fractions(0, 1, max_denominator=10), st.fractions(0, 1, max_denominator=10))
def test_monotone_in_t_random(w, t1, t2):
    lo, hi = sorted((t1, t2))
    assert committee_confidence(SafetyQuery(w, lo)).probability <= committee_confidence(SafetyQuery(w, hi)).probability


def test_running_term_matches_direct_sum():
    for w in (1, 9, 40):
        for p in (Fraction(0), Fraction(1), Fraction(2, 7), Fraction(1, 4)):
            for c in range(w + 1):
                direct = sum((math.comb(w, k) * p ** k * (1 - p) ** (w - k) for k in range(c + 1)), Fraction(0))
                assert binomial_cdf(w, c, p) == direct


@given(st.integers(1, 60), st.data(), st.fractions(0, 1, max_denominator=30))
def test_complement_identity(w, data, p):
    c = data.draw(st.integers(0, w))
    tail = sum((binomial_pmf(w, k, p) for k in range(c + 1, w + 1)), Fraction(0))
    assert binomial_cdf(w, c, p) + tail == 1


@given(st.integers(1, 120), st.data(), st.sampled_from([Fraction(1, 4), Fraction(1, 3), Fraction(1, 10)]))
def test_exact_and_float_agree(w, data, p):
    c = data.draw(st.integers(0, w))
    exact = binomial_cdf(w, c, p)
    common = p.denominator ** w
    assert (exact * common).denominator == 1
    assert abs(float(exact) - float_cdf(w, c, float(p))) < 1e-12


def test_large_w_fast():
    import time
    t0 = time.perf_counter()
    binomial_cdf(10_000, 2_500, Q)
    assert time.perf_counter() - t0 < 0.5
