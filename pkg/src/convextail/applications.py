"""End-to-end uses of the worst-case bounds and the coverage simulation."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from ._search import golden_max
from .domain import TailParams
from .errors import ConvexTailError, InfeasibleError, ParameterError
from .estimation import KdeConfig, bootstrap_calibration
from .gpd import gpd_interval_prob_ci
from .objectives import make_exp_utility, make_interval_indicator, make_newsvendor_shortfall
from .solver_interval import IntervalSearchConfig, solve_interval
from .solver_point import LineSearchConfig, solve_point

THREADS_ENV = "CONVEXTAIL_THREADS"


@dataclass(frozen=True)
class KnownDistribution:
    """``exponential(rate)``, ``lognormal(logmu, logsigma)`` or ``pareto(index)``.

    The Pareto family is ``P(X > x) = x**-index`` on ``x > 1``.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        expected = {"exponential": 1, "lognormal": 2, "pareto": 1}
        if self.family not in expected:
            raise ParameterError(f"unknown family {self.family!r}")
        if len(self.params) != expected[self.family]:
            raise ParameterError(f"{self.family} takes {expected[self.family]} parameter(s)")
        positive = self.params if self.family != "lognormal" else self.params[1:]
        if any(not p > 0 for p in positive):
            raise ParameterError(f"invalid parameters {self.params} for {self.family}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def exponential(cls, rate: float = 1.0):
        return cls("exponential", (rate,))

    @classmethod
    def lognormal(cls, logmu: float, logsigma: float):
        return cls("lognormal", (logmu, logsigma))

    @classmethod
    def lognormal_from_mean_sd(cls, mean: float, sd: float):
        s2 = math.log1p((sd / mean) ** 2)
        return cls("lognormal", (math.log(mean) - 0.5 * s2, math.sqrt(s2)))

    @classmethod
    def pareto(cls, index: float = 1.0):
        return cls("pareto", (index,))

    @property
    def frozen(self):
        if self.family == "exponential":
            return stats.expon(scale=1.0 / self.params[0])
        if self.family == "lognormal":
            m, s = self.params
            return stats.lognorm(s, scale=math.exp(m))
        return stats.pareto(self.params[0])

    @property
    def lower(self) -> float:
        return 1.0 if self.family == "pareto" else 0.0

    def pdf(self, x):
        return self.frozen.pdf(x)

    def cdf(self, x):
        return self.frozen.cdf(x)

    def sf(self, x):
        return self.frozen.sf(x)

    def quantile(self, q):
        return self.frozen.ppf(q)

    def pdf_derivative(self, x):
        x = np.asarray(x, dtype=float)
        f = self.pdf(x)
        if self.family == "exponential":
            return -self.params[0] * f
        if self.family == "lognormal":
            m, s = self.params
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(x > 0, -f * (1.0 + (np.log(x) - m) / s**2) / x, 0.0)
        return np.where(x > 1, -(self.params[0] + 1.0) * f / x, 0.0)

    def interval_prob(self, c: float, d: float) -> float:
        return float(self.cdf(d) - self.cdf(c))

    def tail_params(self, a: float) -> TailParams:
        """Exact ``(beta, eta, nu)`` at ``a``."""
        return TailParams(float(a), float(self.sf(a)), float(self.pdf(a)), float(-self.pdf_derivative(a)))

    def truncated_expectation(self, g, upper: float) -> float:
        """``E[g(X); X <= upper]`` by adaptive quadrature."""
        lo = self.lower
        if upper <= lo:
            return 0.0
        val, _ = integrate.quad(lambda x: g(x) * float(self.pdf(x)), lo, upper, epsabs=1e-13, epsrel=1e-11, limit=200)
        return float(val)


def entropic_risk_worst_case(
    dist: KnownDistribution, a: float, theta: float, cfg: LineSearchConfig | None = None
) -> float:
    """Largest ``(1/theta) log E[exp(-theta X)]`` over convex tails beyond ``a``."""
    tp = dist.tail_params(a)
    res = solve_point(tp, make_exp_utility(a, theta), cfg)
    if not res.feasible:
        raise InfeasibleError(f"extracted tail parameters at a={a} are inconsistent")
    known = dist.truncated_expectation(lambda x: math.exp(-theta * x), a)
    return math.log(known + res.value) / theta


def entropic_risk_exact(dist: KnownDistribution, theta: float) -> float:
    if dist.family == "exponential":
        r = dist.params[0]
        return -math.log1p(theta / r) / theta
    val, _ = integrate.quad(lambda x: math.exp(-theta * x) * float(dist.pdf(x)), dist.lower, np.inf)
    return math.log(val) / theta


@dataclass(frozen=True)
class NewsvendorResult:
    q_star: float
    value: float
    curve: tuple[tuple[float, float], ...]


def newsvendor_inner_value(
    dist: KnownDistribution, tail: TailParams, p: float, c: float, q: float, cfg: LineSearchConfig | None = None
) -> float:
    """Worst-case profit ``min_P E[p min(q, D)] - c q`` at stock level ``q``.

    The tail part uses ``p min(q, x) = p q - p max(q - x, 0)``, so the
    minimum over tails is ``p q beta`` minus the worst-case shortfall.
    """
    a = tail.a
    known = dist.truncated_expectation(lambda x: p * min(q, x), a)
    shortfall = make_newsvendor_shortfall(a, p, q)
    res = solve_point(tail, shortfall, cfg)
    if not res.feasible:
        raise InfeasibleError("newsvendor tail parameters are inconsistent")
    return known + p * q * tail.beta - res.value - c * q


def robust_newsvendor(
    dist: KnownDistribution,
    a: float,
    p: float,
    c: float,
    q_range: tuple[float, float] | None = None,
    tail: TailParams | None = None,
    curve_points: int = 101,
    cfg: LineSearchConfig | None = None,
) -> NewsvendorResult:
    """Stock level maximizing worst-case profit.

    ``tail`` overrides the tail parameters extracted from ``dist`` at ``a``.
    The outer problem is concave in ``q``: a coarse grid locates the peak and
    golden-section search refines it.
    """
    if not p > c > 0:
        raise ParameterError("need p > c > 0")
    tail = tail or dist.tail_params(a)
    if tail.a != a:
        tail = TailParams(a, tail.beta, tail.eta, tail.nu)
    cfg = cfg or LineSearchConfig(grid_points=2001)
    lo, hi = q_range if q_range is not None else (0.0, float(dist.quantile(0.95)))
    qs = np.linspace(lo, hi, curve_points)
    vals = np.array([newsvendor_inner_value(dist, tail, p, c, q, cfg) for q in qs])
    i = int(np.argmax(vals))
    f = lambda q: newsvendor_inner_value(dist, tail, p, c, q, cfg)
    q_star, v_star, _, _ = golden_max(f, qs[max(i - 1, 0)], qs[min(i + 1, qs.size - 1)], 1e-8, 100)
    if vals[i] > v_star:
        q_star, v_star = float(qs[i]), float(vals[i])
    return NewsvendorResult(float(q_star), float(v_star), tuple(zip(qs.tolist(), vals.tolist())))


@dataclass(frozen=True)
class HeatmapCell:
    a_pct: float
    c_pct: float
    d_pct: float
    truth: float
    bound: float
    ratio: float


def pareto_ratio_heatmap(
    a_pct: float, cells: Sequence[tuple[float, float]], index: float = 1.0, cfg: LineSearchConfig | None = None
) -> list[HeatmapCell]:
    """Worst-case bound over the Pareto probability for each percentile cell."""
    dist = KnownDistribution.pareto(index)
    a = float(dist.quantile(a_pct))
    tp = dist.tail_params(a)
    out = []
    for c_pct, d_pct in cells:
        if not a_pct < c_pct < d_pct < 1:
            raise ParameterError(f"cell ({c_pct}, {d_pct}) must lie above the threshold percentile {a_pct}")
        c, d = float(dist.quantile(c_pct)), float(dist.quantile(d_pct))
        res = solve_point(tp, make_interval_indicator(a, c, d), cfg)
        assert res.feasible, "Pareto tail parameters are always consistent"
        truth = dist.interval_prob(c, d)
        out.append(HeatmapCell(a_pct, c_pct, d_pct, truth, res.value, res.value / truth))
    return out


@dataclass(frozen=True)
class CoverageConfig:
    truth: KnownDistribution = field(default_factory=lambda: KnownDistribution.lognormal(0.0, 0.5))
    a: float = 3.1
    intervals: tuple[tuple[float, float], ...] = ((4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10))
    replications: int = 100
    sample_size: int = 200
    alpha: float = 0.05
    B: int = 1000
    seed: int = 2016
    gpd_threshold: float = 1.8
    kde: KdeConfig = field(default_factory=KdeConfig)
    search: IntervalSearchConfig = field(default_factory=IntervalSearchConfig)

    def __post_init__(self):
        if self.replications < 10:
            raise ParameterError("need at least 10 replications")


@dataclass(frozen=True)
class CoverageRow:
    c: float
    d: float
    truth: float
    mean_upper_bound: float
    coverage: float
    failures: int


def replication_sample(cfg: CoverageConfig, rep: int) -> np.ndarray:
    """Sample for replication ``rep``; identical across methods."""
    rng = np.random.default_rng([cfg.seed, rep, 0])
    return np.asarray(cfg.truth.frozen.rvs(size=cfg.sample_size, random_state=rng), dtype=float)


def _replicate(args) -> list[float] | None:
    cfg, method, rep = args
    data = replication_sample(cfg, rep)
    try:
        if method == "worstcase":
            cal = bootstrap_calibration(data, cfg.a, cfg.alpha, cfg.B, cfg.kde, seed=[cfg.seed, rep, 1])
            bounds = []
            for c, d in cfg.intervals:
                res = solve_interval(cal.intervals, make_interval_indicator(cfg.a, c, d), cfg.search)
                if not res.feasible:
                    return None
                bounds.append(res.value)
            return bounds
        return [gpd_interval_prob_ci(data, cfg.gpd_threshold, c, d, cfg.alpha).hi for c, d in cfg.intervals]
    except ConvexTailError:
        return None


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def coverage_study(cfg: CoverageConfig, method: str = "worstcase", workers: int | None = None) -> list[CoverageRow]:
    """Repeat sample -> calibrate -> bound, and tabulate how often bounds cover the truth.

    Replications whose calibration or fit fails are excluded from the means
    and counted in ``failures``.
    """
    if method not in ("worstcase", "gpd"):
        raise ParameterError(f"unknown method {method!r}")
    workers = default_workers() if workers is None else workers
    jobs = [(cfg, method, r) for r in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    ok = np.array([r for r in results if r is not None], dtype=float).reshape(-1, len(cfg.intervals))
    failures = len(results) - ok.shape[0]
    rows = []
    for k, (c, d) in enumerate(cfg.intervals):
        truth = cfg.truth.interval_prob(c, d)
        col = ok[:, k]
        rows.append(
            CoverageRow(
                float(c),
                float(d),
                truth,
                float(col.mean()) if col.size else math.nan,
                float(np.mean(col >= truth)) if col.size else math.nan,
                failures,
            )
        )
    return rows
