from __future__ import annotations

import math
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from guiplay.metrics import (
    MetricDomainError,
    MetricReport,
    MetricSummary,
    SampleOutcomes,
    TokenLedger,
    aggregate_stage,
    average_tokens_k,
    confidence_interval,
    efficiency_at_k,
    efficiency_from_successes,
    estimate_at_k,
    t_critical,
)


def enumerate_at_k(n: int, c: int, k: int) -> float:
    subsets = list(combinations(range(n), k))
    return sum(any(i < c for i in s) for s in subsets) / len(subsets)


def test_estimator_examples():
    assert estimate_at_k(3, 1, 1) == pytest.approx(1 / 3)
    assert estimate_at_k(3, 1, 3) == 1.0
    assert estimate_at_k(3, 0, 3) == 0.0
    assert estimate_at_k(10, 9, 2) == 1.0


@pytest.mark.parametrize("n", range(1, 8))
def test_estimator_matches_enumeration(n):
    for c in range(n + 1):
        for k in range(1, n + 1):
            assert estimate_at_k(n, c, k) == pytest.approx(enumerate_at_k(n, c, k), rel=1e-12, abs=1e-15)


def test_estimator_large_n_is_stable():
    v = estimate_at_k(200, 3, 100)
    expected = 1 - math.comb(197, 100) / math.comb(200, 100)
    assert v == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("n,c,k", [(0, 0, 1), (3, 4, 1), (3, 1, 0), (3, 1, 4), (3, -1, 1)])
def test_estimator_domain(n, c, k):
    with pytest.raises(MetricDomainError):
        estimate_at_k(n, c, k)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_estimator_monotone_in_k_and_c(args):
    n, c, k = args
    v = estimate_at_k(n, c, k)
    assert 0.0 <= v <= 1.0
    if k < n:
        assert estimate_at_k(n, c, k + 1) >= v - 1e-15
    if c < n:
        assert estimate_at_k(n, c + 1, k) >= v - 1e-15


def test_sample_outcomes_gating():
    with pytest.raises(MetricDomainError):
        SampleOutcomes("p", 3, 1, 2, 0)
    assert SampleOutcomes("p", 3, 3, 2, 1).count("pass") == 2


def test_aggregate_is_mean_over_problems():
    recs = [SampleOutcomes("a", 3, 3, 3, 3), SampleOutcomes("b", 3, 3, 3, 0)]
    assert aggregate_stage(recs, "play", 1) == 0.5
    with pytest.raises(MetricDomainError):
        aggregate_stage([], "play", 1)
    with pytest.raises(MetricDomainError):
        aggregate_stage([SampleOutcomes("a", 3, 0, 0, 0), SampleOutcomes("b", 4, 0, 0, 0)], "exec", 1)


@pytest.mark.parametrize("play,tokens,expected", [(4.3, 4267, 1.01), (8.3, 5480, 1.51)])
def test_efficiency_reference_values(play, tokens, expected):
    ledger = TokenLedger.from_total(tokens * 30, 30)
    assert efficiency_at_k(play, ledger, 1) == pytest.approx(expected, abs=0.005)


def test_efficiency_zero_tokens():
    with pytest.raises(MetricDomainError):
        efficiency_at_k(5.0, TokenLedger.from_total(0, 3), 1)
    with pytest.raises(MetricDomainError):
        average_tokens_k(TokenLedger.from_total(10, 0))


@given(
    st.lists(st.tuples(st.integers(0, 3)), min_size=1, max_size=40),
    st.lists(st.tuples(st.integers(1, 5000), st.integers(0, 2000)), min_size=1, max_size=60),
)
def test_efficiency_two_routes_agree(cplays, calls):
    n = 3
    recs = [SampleOutcomes(f"p{i}", n, 3, 3, c) for i, (c,) in enumerate(cplays)]
    ledger = TokenLedger([(f"c{i}", a, b) for i, (a, b) in enumerate(calls)], len(recs))
    direct = efficiency_at_k(100 * aggregate_stage(recs, "play", 1), ledger, 1)
    via = efficiency_from_successes(math.fsum(r.c_play / n for r in recs), ledger.total_tokens)
    assert direct == pytest.approx(via, rel=1e-12)


def test_confidence_interval_example():
    mean, half = confidence_interval([1, 2, 3, 4, 5], 0.95)
    assert mean == 3.0
    assert half == pytest.approx(1.963, abs=0.001)


def test_confidence_interval_needs_two_runs():
    with pytest.raises(MetricDomainError):
        confidence_interval([1.0])


@pytest.mark.parametrize("level", [0.90, 0.95, 0.99])
def test_t_critical_against_scipy(level):
    for df in list(range(1, 101)) + [150, 400, 2000]:
        ref = stats.t.ppf((1 + level) / 2, df)
        tol = 1e-5 if df <= 100 else 2e-3
        assert t_critical(level, df) == pytest.approx(ref, abs=tol)


def test_t_critical_rejects_unknown_level():
    with pytest.raises(MetricDomainError):
        t_critical(0.8, 4)


def test_report_roundtrip_and_format():
    rep = MetricReport(
        [1],
        2,
        {
            "play@1": MetricSummary.from_runs("play@1", [0.5, 0.5]),
            "efficiency@1": MetricSummary.from_runs("efficiency@1", [1.2, 1.4]),
        },
    )
    again = MetricReport.from_dict(rep.to_dict())
    assert again.to_dict() == rep.to_dict()
    text = rep.format_text()
    assert "play@1 = 50.00 +- 0.00" in text
    assert "efficiency@1 = 1.30" in text


def test_report_rejects_out_of_range():
    with pytest.raises(MetricDomainError):
        MetricReport([1], 1, {"play@1": MetricSummary("play@1", [1.5], 1.5, None)})
