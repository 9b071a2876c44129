import math

import numpy as np
import pytest
from scipy import integrate, stats

from convextail.applications import (
    CoverageConfig,
    KnownDistribution,
    coverage_study,
    default_workers,
    entropic_risk_exact,
    entropic_risk_worst_case,
    newsvendor_inner_value,
    pareto_ratio_heatmap,
    replication_sample,
    robust_newsvendor,
)
from convextail.domain import TailParams
from convextail.errors import ParameterError
from convextail.solver_interval import IntervalSearchConfig
from convextail.solver_point import LineSearchConfig

EXP = KnownDistribution.exponential(1.0)
A70 = -math.log(0.7)
THETAS = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0]


def test_distribution_basics():
    ln = KnownDistribution.lognormal_from_mean_sd(50.0, 20.0)
    assert ln.frozen.mean() == pytest.approx(50.0, rel=1e-12)
    assert ln.frozen.std() == pytest.approx(20.0, rel=1e-12)
    for dist, x in [(EXP, 0.7), (ln, 60.0), (KnownDistribution.pareto(1.0), 3.0), (KnownDistribution.lognormal(0, 0.5), 2.0)]:
        h = 1e-6 * x
        fd = (dist.pdf(x + h) - dist.pdf(x - h)) / (2 * h)
        assert dist.pdf_derivative(x) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(ParameterError):
        KnownDistribution.exponential(-1.0)
    with pytest.raises(ParameterError):
        KnownDistribution.pareto(0.0)


def test_exponential_tail_params_at_70th_percentile():
    tp = EXP.tail_params(A70)
    assert (tp.beta, tp.eta, tp.nu) == pytest.approx((0.7, 0.7, 0.7), rel=1e-12)


def test_truncated_expectation():
    val = EXP.truncated_expectation(lambda x: math.exp(-x), A70)
    assert val == pytest.approx(0.5 * (1 - 0.7**2), rel=1e-10)
    assert EXP.truncated_expectation(lambda x: 1.0, -1.0) == 0.0


def test_entropic_exact_value():
    assert entropic_risk_exact(EXP, 1.0) == pytest.approx(-math.log(2), rel=1e-14)
    ln = KnownDistribution.lognormal(0.0, 0.5)
    ref, _ = integrate.quad(lambda x: math.exp(-x) * stats.lognorm(0.5).pdf(x), 0, np.inf)
    assert entropic_risk_exact(ln, 1.0) == pytest.approx(math.log(ref), rel=1e-9)


def test_entropic_worst_case_dominates_and_gap_shrinks():
    gaps = [entropic_risk_worst_case(EXP, A70, t) - entropic_risk_exact(EXP, t) for t in THETAS]
    assert all(g >= 0 for g in gaps)
    assert all(g1 <= g0 for g0, g1 in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("theta", [0.5, 2.0])
def test_entropic_non_increasing_in_threshold(theta):
    vals = [entropic_risk_worst_case(EXP, a, theta) for a in (0.2, 0.5, 1.0, 1.5, 2.5)]
    assert all(v1 <= v0 + 1e-12 for v0, v1 in zip(vals, vals[1:]))


NEWS = KnownDistribution.lognormal_from_mean_sd(50.0, 20.0)
FAST_LINE = LineSearchConfig(grid_points=201)


def test_newsvendor_zero_stock_and_payoff_cap():
    a = float(NEWS.quantile(0.7))
    tail = NEWS.tail_params(a)
    assert newsvendor_inner_value(NEWS, tail, 7.0, 1.0, 0.0, FAST_LINE) == pytest.approx(0.0, abs=1e-12)
    for q in np.linspace(1, 120, 9):
        assert newsvendor_inner_value(NEWS, tail, 7.0, 1.0, q, FAST_LINE) <= (7.0 - 1.0) * q + 1e-9


def test_newsvendor_known_tail_gives_true_profit_lower_bound():
    # the worst case over tails can only lower the profit of the true distribution
    a = float(NEWS.quantile(0.7))
    tail = NEWS.tail_params(a)
    for q in (30.0, 50.0, 70.0):
        below, _ = integrate.quad(lambda x: x * float(NEWS.pdf(x)), 0, q, limit=200)
        true = 7.0 * (below + q * float(NEWS.sf(q)))
        assert newsvendor_inner_value(NEWS, tail, 7.0, 1.0, q, FAST_LINE) <= true - q + 1e-6


def test_robust_newsvendor_small_grid():
    a = float(NEWS.quantile(0.7))
    res = robust_newsvendor(NEWS, a, 7.0, 1.0, q_range=(0.0, 100.0), curve_points=21, cfg=FAST_LINE)
    qs, vals = zip(*res.curve)
    assert len(res.curve) == 21 and qs[0] == 0.0 and vals[0] == pytest.approx(0.0, abs=1e-12)
    assert res.value >= max(vals) - 1e-9
    assert 0 < res.q_star < 100
    with pytest.raises(ParameterError):
        robust_newsvendor(NEWS, a, 1.0, 2.0)


def test_robust_newsvendor_with_supplied_tail():
    tail = TailParams(0.0, 0.7, 0.007, 0.0003)
    a = float(NEWS.quantile(0.7))
    res = robust_newsvendor(NEWS, a, 7.0, 1.0, q_range=(0.0, 100.0), tail=tail, curve_points=11, cfg=FAST_LINE)
    # with eta this small the tail mass decays slowly, so stocking keeps paying
    assert res.q_star == pytest.approx(100.0, abs=1e-6)


def test_heatmap_ratios():
    cells = [(0.75 + 0.02 * k, 0.76 + 0.02 * k) for k in range(12)]
    rows = pareto_ratio_heatmap(0.7, cells)
    ratios = [r.ratio for r in rows]
    assert all(r >= 1 - 1e-9 for r in ratios)
    assert all(r1 >= r0 - 1e-9 for r0, r1 in zip(ratios, ratios[1:]))
    assert rows[0].truth == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ParameterError):
        pareto_ratio_heatmap(0.7, [(0.6, 0.65)])


def test_heatmap_reference_cells():
    rows = pareto_ratio_heatmap(0.7, [(0.85, 0.86), (0.98, 0.99)])
    assert rows[0].ratio == pytest.approx(2.0, rel=0.05)
    assert rows[1].ratio == pytest.approx(8.0, rel=0.05)


SMALL = CoverageConfig(
    intervals=((4, 5), (6, 7)),
    replications=10,
    B=200,
    search=IntervalSearchConfig(outer_points=41, inner_points=201),
)


def test_coverage_config_validation():
    with pytest.raises(ParameterError):
        CoverageConfig(replications=5)


def test_replication_samples_are_seeded():
    np.testing.assert_array_equal(replication_sample(SMALL, 3), replication_sample(SMALL, 3))
    assert not np.array_equal(replication_sample(SMALL, 3), replication_sample(SMALL, 4))


def test_coverage_study_small_deterministic():
    rows = coverage_study(SMALL, "worstcase", workers=1)
    assert [(r.c, r.d) for r in rows] == [(4.0, 5.0), (6.0, 7.0)]
    for r in rows:
        assert 0 <= r.coverage <= 1
        assert 0 <= r.failures < SMALL.replications
        assert r.truth == pytest.approx(KnownDistribution.lognormal(0, 0.5).interval_prob(r.c, r.d))
    assert coverage_study(SMALL, "worstcase", workers=2) == rows


def test_coverage_study_gpd_and_errors():
    rows = coverage_study(SMALL, "gpd", workers=1)
    assert len(rows) == 2 and all(0 <= r.coverage <= 1 for r in rows)
    with pytest.raises(ParameterError):
        coverage_study(SMALL, "bayes")


def test_default_workers_from_environment(monkeypatch):
    monkeypatch.setenv("CONVEXTAIL_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("CONVEXTAIL_THREADS", "nope")
    assert default_workers() == 1
    monkeypatch.delenv("CONVEXTAIL_THREADS")
    assert default_workers() == 1
