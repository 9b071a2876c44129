"""Peaks-over-threshold baseline: generalized Pareto fit of threshold excesses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .errors import FitFailureError, ParameterError

ZETA_EPS = 1e-10


@dataclass(frozen=True)
class GpdParams:
    zeta: float
    beta_g: float
    covariance: np.ndarray
    n_excess: int
    loglik: float

    def __post_init__(self):
        if not self.beta_g > 0:
            raise ParameterError("GPD scale must be positive")


def gpd_cdf(x, zeta: float, beta_g: float):
    """``1 - (1 + zeta*x/beta)^(-1/zeta)``, exponential for ``|zeta| <= 1e-10``."""
    x = np.asarray(x, dtype=float)
    if abs(zeta) <= ZETA_EPS:
        out = -np.expm1(-x / beta_g)
    else:
        r = zeta * x / beta_g
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.expm1(-np.log1p(np.where(r > -1, r, 0.0)) / zeta)
        out = np.where(r > -1, out, 1.0)
    out = np.where(x <= 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _cdf_gradient(x: float, zeta: float, beta_g: float) -> np.ndarray:
    """``d G(x) / d(zeta, beta_g)``."""
    if x <= 0:
        return np.zeros(2)
    y = x / beta_g
    if abs(zeta) <= 1e-6:
        surv = math.exp(-y + 0.5 * zeta * y * y)
        dlog_dz = 0.5 * y * y - 2.0 * zeta * y**3 / 3.0
        dlog_db = y / beta_g * (1.0 - zeta * y)
    else:
        t = 1.0 + zeta * y
        if t <= 0:
            return np.zeros(2)
        surv = t ** (-1.0 / zeta)
        dlog_dz = math.log(t) / zeta**2 - y / (zeta * t)
        dlog_db = y / (beta_g * t)
    return -surv * np.array([dlog_dz, dlog_db])


def gpd_loglik(zeta: float, beta_g: float, excess: np.ndarray) -> float:
    if beta_g <= 0:
        return -math.inf
    y = excess / beta_g
    n = excess.size
    if abs(zeta) <= ZETA_EPS:
        return -n * math.log(beta_g) - float(y.sum())
    r = zeta * y
    if np.any(r <= -1):
        return -math.inf
    return -n * math.log(beta_g) - (1.0 + 1.0 / zeta) * float(np.log1p(r).sum())


def gpd_fit_mle(excesses) -> GpdParams:
    """Maximum likelihood via Nelder-Mead on ``(zeta, log beta_g)``.

    The covariance is the inverse observed information, from central
    differences of the log-likelihood with relative step ``1e-5``.
    """
    x = np.asarray(getattr(excesses, "values", excesses), dtype=float).ravel()
    if x.size < 10:
        raise FitFailureError(f"need at least 10 excesses, got {x.size}")
    if np.any(x <= 0):
        raise FitFailureError("excesses must be positive")
    mean, var = float(x.mean()), float(x.var(ddof=1))
    if not var > 1e-14 * mean * mean:
        raise FitFailureError("degenerate excesses: zero spread", {"mean": mean})

    zeta0 = 0.5 * (1.0 - mean * mean / var)
    starts = [(zeta0, math.log(max(0.5 * mean * (mean * mean / var + 1.0), 1e-12))), (0.0, math.log(mean))]
    nll = lambda th: -gpd_loglik(th[0], math.exp(th[1]), x)
    best = None
    for z0, lb0 in starts:
        if not math.isfinite(nll((z0, lb0))):
            z0 = max(z0, 0.0)
        res = optimize.minimize(
            nll, np.array([z0, lb0]), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000}
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not best.success or not math.isfinite(best.fun):
        raise FitFailureError("GPD likelihood maximization did not converge", {"message": getattr(best, "message", "")})
    zeta, beta_g = float(best.x[0]), float(math.exp(best.x[1]))
    cov = _observed_information_inverse(zeta, beta_g, x)
    return GpdParams(zeta, beta_g, cov, int(x.size), float(-best.fun))


def _fill_hessian(hess, ll, theta, h):
    """Central second differences of ``ll`` at ``theta`` with steps ``h``."""
    for i in range(2):
        for j in range(2):
            ei = np.eye(2)[i] * h[i]
            ej = np.eye(2)[j] * h[j]
            hess[i, j] = (ll(theta + ei + ej) - ll(theta + ei - ej) - ll(theta - ei + ej) + ll(theta - ei - ej)) / (
                4 * h[i] * h[j]
            )


def _observed_information_inverse(zeta: float, beta_g: float, x: np.ndarray) -> np.ndarray:
    theta = np.array([zeta, beta_g])
    h = 1e-5 * np.maximum(np.abs(theta), 1e-2)
    ll = lambda th: gpd_loglik(th[0], th[1], x)
    hess = np.empty((2, 2))
    # probes can leave the support near a boundary MLE; non-finite entries are caught below
    with np.errstate(invalid="ignore", over="ignore"):
        _fill_hessian(hess, ll, theta, h)
    info = -0.5 * (hess + hess.T)
    if not np.all(np.isfinite(info)):
        raise FitFailureError("observed information is not finite", {"zeta": zeta, "beta_g": beta_g})
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise FitFailureError("observed information is singular", {"zeta": zeta, "beta_g": beta_g}) from exc
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() < 0:
        raise FitFailureError("MLE covariance is not positive semidefinite", {"zeta": zeta, "beta_g": beta_g})
    return cov


@dataclass(frozen=True)
class GpdIntervalEstimate:
    estimate: float
    lo: float
    hi: float
    fit: GpdParams
    exceed_fraction: float


def gpd_interval_prob_ci(s, u: float, c: float, d: float, alpha: float = 0.05) -> GpdIntervalEstimate:
    """Delta-method CI for ``P(c < X < d)`` under the fitted tail ``(1 - F(u)) * GPD``.

    Only the GPD parameter uncertainty enters the variance; negative lower
    endpoints are kept as computed.
    """
    data = np.asarray(getattr(s, "values", s), dtype=float)
    if not (u < c <= d):
        raise ParameterError(f"need u < c <= d, got u={u}, c={c}, d={d}")
    excess = data[data > u] - u
    fit = gpd_fit_mle(excess)
    tail = 1.0 - float(np.mean(data <= u))
    g_c = gpd_cdf(c - u, fit.zeta, fit.beta_g)
    g_d = gpd_cdf(d - u, fit.zeta, fit.beta_g)
    est = tail * (g_d - g_c)
    grad = tail * (_cdf_gradient(d - u, fit.zeta, fit.beta_g) - _cdf_gradient(c - u, fit.zeta, fit.beta_g))
    se = math.sqrt(max(float(grad @ fit.covariance @ grad), 0.0))
    z = float(stats.norm.ppf(1 - alpha / 2))
    return GpdIntervalEstimate(est, est - z * se, est + z * se, fit, tail)
