"""Core value types for worst-case convex-tail bounds.

All measure-side quantities live in shifted coordinates (``x - a``); only
:class:`PiecewiseLinearDensity` carries the threshold ``a`` itself.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import CalibrationMismatchError, ParameterError

BOUNDARY_RTOL = 1e-12
WEIGHT_ATOL = 1e-12


class Consistency(str, enum.Enum):
    STRICT = "strict"
    BOUNDARY = "boundary"
    INFEASIBLE = "infeasible"


class TailClass(str, enum.Enum):
    ATTAINED_LIGHT = "attained-light"
    LIMITING_HEAVY = "limiting-heavy"
    DEGENERATE_UNIQUE = "degenerate-unique"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class TailParams:
    """Threshold ``a`` with tail mass ``beta``, density ``eta`` and slope ``-nu`` at ``a``."""

    a: float
    beta: float
    eta: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.eta > 0.0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if not self.nu > 0.0:
            raise ParameterError(f"nu must be positive, got {self.nu}")
        if not math.isfinite(self.a):
            raise ParameterError(f"threshold must be finite, got {self.a}")


@dataclass(frozen=True)
class MomentParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.mu > 0.0 and self.sigma > 0.0):
            raise ParameterError(f"moments must be positive, got mu={self.mu}, sigma={self.sigma}")


@dataclass(frozen=True)
class IntervalParams:
    """Confidence-interval version of :class:`TailParams` (joint level ``1 - alpha``)."""

    a: float
    beta_lo: float
    beta_hi: float
    eta_lo: float
    eta_hi: float
    nu_hi: float
    alpha: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.beta_lo <= self.beta_hi < 1.0):
            raise ParameterError(
                f"need 0 < beta_lo <= beta_hi < 1, got [{self.beta_lo}, {self.beta_hi}]"
            )
        if not (0.0 < self.eta_lo <= self.eta_hi):
            raise ParameterError(f"need 0 < eta_lo <= eta_hi, got [{self.eta_lo}, {self.eta_hi}]")
        if not self.nu_hi > 0.0:
            raise ParameterError(f"nu_hi must be positive, got {self.nu_hi}")
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_point(cls, p: TailParams, alpha: float = 0.05) -> "IntervalParams":
        return cls(p.a, p.beta, p.beta, p.eta, p.eta, p.nu, alpha)


@dataclass(frozen=True)
class IntervalMomentParams:
    mu_lo: float
    mu_hi: float
    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not (0.0 < self.mu_lo <= self.mu_hi and 0.0 < self.sigma_lo <= self.sigma_hi):
            raise ParameterError(f"invalid moment box {self}")


@dataclass(frozen=True)
class MomentMeasure:
    """Finitely supported probability measure on [0, inf) with at most three atoms."""

    support: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(x) for x in self.support)
        ps = tuple(float(p) for p in self.weights)
        if not 1 <= len(xs) <= 3 or len(xs) != len(ps):
            raise ParameterError("a moment measure needs 1 to 3 atoms with matching weights")
        if any(x < 0.0 or not math.isfinite(x) for x in xs):
            raise ParameterError(f"support must be finite and nonnegative, got {xs}")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ParameterError(f"support must be sorted, got {xs}")
        if any(p < 0.0 for p in ps):
            raise ParameterError(f"weights must be nonnegative, got {ps}")
        total = math.fsum(ps)
        if abs(total - 1.0) > WEIGHT_ATOL:
            raise ParameterError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "support", xs)
        object.__setattr__(self, "weights", tuple(p / total for p in ps))

    def moments(self) -> tuple[float, float]:
        m1 = math.fsum(p * x for p, x in zip(self.weights, self.support))
        m2 = math.fsum(p * x * x for p, x in zip(self.weights, self.support))
        return m1, m2

    def expect(self, fn) -> float:
        vals = np.asarray(fn(np.asarray(self.support, dtype=float)), dtype=float)
        return math.fsum(float(p) * float(v) for p, v in zip(self.weights, vals))


@dataclass(frozen=True)
class PiecewiseLinearDensity:
    """Continuous piecewise-linear tail density on ``[a, inf)``.

    Knot values are stored rather than slopes so continuity holds by
    construction. Beyond the last knot the density is zero. With
    ``limiting=True`` the object is the pointwise limit of a heavy-tail
    sequence and its mass falls short of the calibrated ``beta``.
    """

    a: float
    knots: tuple[float, ...]
    values: tuple[float, ...]
    limiting: bool = False

    def __post_init__(self):
        ks = tuple(float(k) for k in self.knots)
        vs = tuple(float(v) for v in self.values)
        if len(ks) != len(vs) or not 2 <= len(ks) <= 4:
            raise ParameterError("density needs 2 to 4 knots with matching values")
        if ks[0] != self.a:
            raise ParameterError("first knot must equal the threshold")
        if any(b < a for a, b in zip(ks, ks[1:])):
            raise ParameterError(f"knots must be non-decreasing, got {ks}")
        object.__setattr__(self, "knots", ks)
        object.__setattr__(self, "values", vs)

    def segments(self) -> list[tuple[float, float, float, float]]:
        """Segments as ``(x0, x1, f(x0), f(x1))``, skipping those narrower than rounding noise."""
        min_width = 1e-12 * (self.knots[-1] - self.knots[0])
        return [
            (x0, x1, v0, v1)
            for x0, x1, v0, v1 in zip(self.knots, self.knots[1:], self.values, self.values[1:])
            if x1 - x0 > min_width
        ]

    def slopes(self) -> list[float]:
        return [(v1 - v0) / (x1 - x0) for x0, x1, v0, v1 in self.segments()]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.knots, self.values, left=np.nan, right=0.0)
        return np.where(x < self.a, np.nan, out)

    def mass(self) -> float:
        return math.fsum(0.5 * (v0 + v1) * (x1 - x0) for x0, x1, v0, v1 in self.segments())

    @property
    def support_end(self) -> float:
        return self.knots[-1]

    def to_dict(self) -> dict[str, Any]:
        return {"a": self.a, "knots": list(self.knots), "values": list(self.values), "limiting": self.limiting}


@dataclass(frozen=True)
class BoundResult:
    value: float | None
    tail_class: TailClass
    density: PiecewiseLinearDensity | None = None
    maximizer: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if (self.tail_class is TailClass.INFEASIBLE) != (self.value is None):
            raise ParameterError("value must be absent exactly when the problem is infeasible")

    @property
    def feasible(self) -> bool:
        return self.tail_class is not TailClass.INFEASIBLE


@dataclass
class FeasibilityReport:
    mass: bool
    start_value: bool
    slope_bounds: bool
    convexity: bool
    nonnegative: bool
    vanishes: bool
    details: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all((self.mass, self.start_value, self.slope_bounds, self.convexity, self.nonnegative, self.vanishes))

    def failures(self) -> list[str]:
        names = ("mass", "start_value", "slope_bounds", "convexity", "nonnegative", "vanishes")
        return [n for n in names if not getattr(self, n)]


def to_moment_params(p: TailParams) -> MomentParams:
    return MomentParams(mu=p.eta / p.nu, sigma=2.0 * p.beta / p.nu)


def interval_moment_params(ip: IntervalParams) -> IntervalMomentParams:
    return IntervalMomentParams(
        mu_lo=ip.eta_lo / ip.nu_hi,
        mu_hi=ip.eta_hi / ip.nu_hi,
        sigma_lo=2.0 * ip.beta_lo / ip.nu_hi,
        sigma_hi=2.0 * ip.beta_hi / ip.nu_hi,
    )


def classify_moments(mu: float, sigma: float, rtol: float = BOUNDARY_RTOL) -> Consistency:
    gap = sigma - mu * mu
    if abs(gap) <= rtol * max(sigma, mu * mu):
        return Consistency.BOUNDARY
    return Consistency.STRICT if gap > 0 else Consistency.INFEASIBLE


def consistency_check(m: MomentParams, rtol: float = BOUNDARY_RTOL) -> Consistency:
    """A feasible convex tail exists iff ``sigma >= mu**2``; equality leaves exactly one."""
    return classify_moments(m.mu, m.sigma, rtol)


def triangle_density(a: float, height: float, slope: float, limiting: bool = False) -> PiecewiseLinearDensity:
    """Straight line from ``(a, height)`` down to zero with slope ``-slope``."""
    return PiecewiseLinearDensity(a, (a, a + height / slope), (height, 0.0), limiting)


def density_from_measure(m: MomentMeasure, p: TailParams, rtol: float = 1e-9) -> PiecewiseLinearDensity:
    """Map a feasible moment measure to its convex tail density.

    The right derivative at ``a + x`` is ``-nu * (1 - P(X <= x))``; the
    density starts at ``eta`` and reaches zero at the last atom.
    """
    mp = to_moment_params(p)
    m1, m2 = m.moments()
    if abs(m1 - mp.mu) > rtol * mp.mu or abs(m2 - mp.sigma) > rtol * mp.sigma:
        raise CalibrationMismatchError(
            f"measure moments ({m1:.12g}, {m2:.12g}) do not match ({mp.mu:.12g}, {mp.sigma:.12g})"
        )
    knots = [p.a]
    values = [p.eta]
    cum = 0.0
    prev = 0.0
    for x, w in zip(m.support, m.weights):
        values.append(values[-1] - p.nu * (1.0 - cum) * (x - prev))
        knots.append(p.a + x)
        cum += w
        prev = x
    # last atom carries the remaining mass, so the density is zero there up to rounding
    values[-1] = 0.0
    values = [max(v, 0.0) for v in values]
    return PiecewiseLinearDensity(p.a, tuple(knots), tuple(values))


def verify_density_feasibility(f: PiecewiseLinearDensity, p: TailParams, tol: float = 1e-9) -> FeasibilityReport:
    """Check a density against the convex-tail constraints for ``p``."""
    segs = f.segments()
    slopes = f.slopes()
    mass = f.mass()
    # knot values carry rounding error, which a short segment amplifies into its slope
    slack = [tol * p.nu + 4 * np.finfo(float).eps * max(abs(v0), abs(v1), p.eta) / (x1 - x0) for x0, x1, v0, v1 in segs]
    details = {
        "mass": mass,
        "mass_error": mass - p.beta,
        "start_value": f.values[0],
        "min_slope": min(slopes) if slopes else 0.0,
        "max_slope": max(slopes) if slopes else 0.0,
    }
    mass_ok = f.limiting or abs(mass - p.beta) <= tol * max(p.beta, 1.0)
    start_ok = abs(f.values[0] - p.eta) <= tol * p.eta
    slope_ok = all(-p.nu - e <= s <= e for s, e in zip(slopes, slack))
    convex_ok = all(s1 >= s0 - e0 - e1 for s0, s1, e0, e1 in zip(slopes, slopes[1:], slack, slack[1:]))
    nonneg_ok = all(v >= -tol * p.eta for v in f.values)
    vanish_ok = f.limiting or abs(f.values[-1]) <= tol * p.eta
    return FeasibilityReport(mass_ok, start_ok, slope_ok, convex_ok, nonneg_ok, vanish_ok, details)
