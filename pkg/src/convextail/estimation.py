"""Calibration of ``(beta, eta, nu)`` intervals from raw data.

Point estimates come from a Gaussian kernel density estimate; interval
estimates are bootstrap percentiles, Bonferroni-split over the three
parameters so the joint level is ``1 - alpha``.

Resampling is bit-reproducible: a single ``numpy.random.default_rng(seed)``
draws one ``(B, n)`` integer matrix, and row ``b`` is replicate ``b``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .domain import IntervalParams
from .errors import ParameterError, ThresholdInvalidError

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sample:
    """Sorted, finite observations; calibration needs ``n >= min_size``."""

    values: np.ndarray
    min_size: int = field(default=20, repr=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if not np.all(np.isfinite(v)):
            raise ParameterError("sample contains non-finite values")
        if v.size < self.min_size:
            raise ParameterError(f"sample has {v.size} values, need at least {self.min_size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class KdeConfig:
    """``bandwidth`` is ``"silverman"`` or a fixed positive float.

    ``derivative_bandwidth_factor=None`` inflates the density bandwidth by
    ``n**(1/5 - 1/7)`` for the derivative estimate.
    """

    bandwidth: str | float = "silverman"
    derivative_bandwidth_factor: float | None = None
    tail_estimator: str = "kde"
    floor: float = 1e-12

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ParameterError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ParameterError("fixed bandwidth must be positive")
        if self.tail_estimator not in ("kde", "ecdf"):
            raise ParameterError("tail_estimator must be 'kde' or 'ecdf'")


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, Sample) else np.atleast_1d(np.asarray(s, dtype=float))


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    """``0.9 * min(sd, IQR/1.34) * n^(-1/5)`` along the last axis (R's ``bw.nrd0``)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    sd = x.std(axis=-1, ddof=1) if n > 1 else np.zeros(x.shape[:-1])
    q75, q25 = np.percentile(x, [75, 25], axis=-1)
    spread = np.minimum(sd, (q75 - q25) / 1.34)
    # bw.nrd0 fallbacks when the IQR collapses
    spread = np.where(spread > 0, spread, np.where(sd > 0, sd, np.abs(x[..., 0])))
    spread = np.where(spread > 0, spread, 1.0)
    return 0.9 * spread * n ** (-0.2)


def bandwidths(x: np.ndarray, cfg: KdeConfig) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if isinstance(cfg.bandwidth, str):
        b = silverman_bandwidth(x)
    else:
        b = np.full(x.shape[:-1], float(cfg.bandwidth))
    factor = n ** (1 / 5 - 1 / 7) if cfg.derivative_bandwidth_factor is None else cfg.derivative_bandwidth_factor
    return b, b * factor


def _phi(u):
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def kde_density(s, x, cfg: KdeConfig = KdeConfig()):
    data = _values(s)
    b, _ = bandwidths(data, cfg)
    x = np.asarray(x, dtype=float)
    u = (x[..., None] - data) / b
    out = _phi(u).mean(axis=-1) / b
    return float(out) if out.ndim == 0 else out


def kde_derivative(s, x, cfg: KdeConfig = KdeConfig()):
    """Exact derivative of the Gaussian mixture built with the derivative bandwidth."""
    data = _values(s)
    _, bd = bandwidths(data, cfg)
    x = np.asarray(x, dtype=float)
    u = (x[..., None] - data) / bd
    out = (-u * _phi(u)).mean(axis=-1) / (bd * bd)
    return float(out) if out.ndim == 0 else out


def kde_second_derivative(s, x, cfg: KdeConfig = KdeConfig()):
    data = _values(s)
    _, bd = bandwidths(data, cfg)
    x = np.asarray(x, dtype=float)
    u = (x[..., None] - data) / bd
    out = ((u * u - 1.0) * _phi(u)).mean(axis=-1) / bd**3
    return float(out) if out.ndim == 0 else out


def tail_prob(s, a: float, cfg: KdeConfig = KdeConfig()) -> float:
    """Kernel-smoothed ``P(X > a)`` (or ``1 - ECDF(a)`` with ``tail_estimator='ecdf'``)."""
    data = _values(s)
    if cfg.tail_estimator == "ecdf":
        return float(np.mean(data > a))
    b, _ = bandwidths(data, cfg)
    return float(ndtr((data - a) / b).mean())


@dataclass(frozen=True)
class PointEstimates:
    a: float
    beta: float
    eta: float
    nu: float
    bandwidth: float
    derivative_bandwidth: float


def _estimate_rows(rows: np.ndarray, a: float, cfg: KdeConfig):
    """Vectorized ``(beta, eta, nu)`` for each row of ``rows``."""
    b, bd = bandwidths(rows, cfg)
    b = b[..., None]
    bd = bd[..., None]
    if cfg.tail_estimator == "ecdf":
        beta = (rows > a).mean(axis=-1)
    else:
        beta = ndtr((rows - a) / b).mean(axis=-1)
    eta = (_phi((a - rows) / b) / b).mean(axis=-1)
    u = (a - rows) / bd
    nu = ((u * _phi(u)) / (bd * bd)).mean(axis=-1)
    return beta, eta, nu, b[..., 0], bd[..., 0]


def point_estimates(s, a: float, cfg: KdeConfig = KdeConfig()) -> PointEstimates:
    data = _values(s)
    beta, eta, nu, b, bd = _estimate_rows(data[None, :], a, cfg)
    return PointEstimates(a, float(beta[0]), float(eta[0]), float(nu[0]), float(b[0]), float(bd[0]))


@dataclass(frozen=True)
class Calibration:
    """Bootstrap output: the intervals plus what produced them."""

    intervals: IntervalParams
    point: PointEstimates
    level_per_parameter: float
    replicates: int
    seed: int | None
    clamped: tuple[str, ...] = ()


def bootstrap_calibration(
    s,
    a: float,
    alpha: float = 0.05,
    B: int = 1000,
    cfg: KdeConfig = KdeConfig(),
    seed: int | None = 0,
) -> Calibration:
    """Percentile bootstrap intervals at per-parameter level ``1 - alpha/3``.

    ``beta`` and ``eta`` get two-sided intervals; ``nu`` gets a one-sided
    upper bound (a lower confidence bound on the density derivative).
    """
    if B < 100:
        raise ParameterError("need at least 100 bootstrap replicates")
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    data = _values(s)
    n = data.size
    pt = point_estimates(data, a, cfg)
    if not pt.nu > 0:
        raise ThresholdInvalidError(
            f"estimated density is not decreasing at a={a} (slope {-pt.nu:.4g}); pick a threshold in the convex tail"
        )
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(B, n))
    beta_b, eta_b, nu_b, _, _ = _estimate_rows(data[idx], a, cfg)

    q = alpha / 3.0
    beta_lo, beta_hi = np.quantile(beta_b, [q / 2, 1 - q / 2])
    eta_lo, eta_hi = np.quantile(eta_b, [q / 2, 1 - q / 2])
    nu_hi = np.quantile(nu_b, 1 - q)

    bounds = {"beta_lo": beta_lo, "beta_hi": beta_hi, "eta_lo": eta_lo, "eta_hi": eta_hi, "nu_hi": nu_hi}
    clamped = []
    for k, v in bounds.items():
        if not v > cfg.floor:
            clamped.append(k)
            bounds[k] = cfg.floor
    if bounds["beta_hi"] >= 1.0:
        clamped.append("beta_hi")
        bounds["beta_hi"] = 1.0 - cfg.floor
    if clamped:
        warnings.warn(f"clamped nonpositive interval endpoints {clamped} to {cfg.floor}", CalibrationWarning, stacklevel=2)
    bounds["beta_lo"] = min(bounds["beta_lo"], bounds["beta_hi"])
    bounds["eta_lo"] = min(bounds["eta_lo"], bounds["eta_hi"])
    ip = IntervalParams(a=a, alpha=alpha, **{k: float(v) for k, v in bounds.items()})
    log.debug("calibrated %s from n=%d, B=%d", ip, n, B)
    return Calibration(ip, pt, 1 - q, B, seed, tuple(clamped))


def bootstrap_interval_params(s, a, alpha=0.05, B=1000, cfg: KdeConfig = KdeConfig(), seed=0) -> IntervalParams:
    return bootstrap_calibration(s, a, alpha, B, cfg, seed).intervals


@dataclass(frozen=True)
class ThresholdSuggestion:
    threshold: float
    points_above: int
    mode: float


def suggest_threshold(s, cfg: KdeConfig = KdeConfig(), grid_points: int = 2001) -> ThresholdSuggestion:
    """First point past the KDE mode where the density derivative stops falling.

    That is the estimated inflection into the convex region; thresholds
    should sit at or above it.
    """
    data = _values(s)
    if data.size < 50:
        raise ParameterError("threshold suggestion needs at least 50 observations")
    b, bd = bandwidths(data, cfg)
    grid = np.linspace(data.min() - 3 * b, data.max() + 3 * b, grid_points)
    dens = kde_density(data, grid, cfg)
    mode = float(grid[int(np.argmax(dens))])
    after = grid[grid >= mode]
    second = kde_second_derivative(data, after, cfg)
    # derivative decreasing <=> second derivative negative; look for - to + crossing
    cross = np.nonzero((second[:-1] < 0) & (second[1:] >= 0))[0]
    if cross.size == 0:
        start = np.nonzero(second >= 0)[0]
        if start.size == 0:
            raise ThresholdInvalidError("no inflection found past the mode; choose the threshold manually")
        t = float(after[start[0]])
    else:
        k = int(cross[0])
        s0, s1 = second[k], second[k + 1]
        t = float(after[k] + (after[k + 1] - after[k]) * (-s0) / (s1 - s0))
    return ThresholdSuggestion(t, int(np.sum(data > t)), mode)
