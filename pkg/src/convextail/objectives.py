"""Performance functions ``h`` paired with their double integral ``H``.

``H(x) = int_0^x int_0^u h(v + a) dv du`` is evaluated in shifted coordinates
(``x >= 0`` measured from the threshold). ``lam`` is ``lim H(x) / x**2``,
which decides whether the worst case can escape to infinity; it is always
supplied analytically or declared, never estimated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import AssumptionViolationError, ParameterError

ArrayFn = Callable[[np.ndarray], np.ndarray]

VALIDATION_POINTS = 10_001


class ObjectiveWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ObjectiveSpec:
    """Bounded, quasi-concave performance function and its integrated kernel.

    ``h`` takes points on the original axis; ``H`` takes shifted points.
    ``shift`` is the constant added to make ``h`` nonnegative; solvers
    subtract ``shift * beta`` from the bound they report.
    """

    name: str
    a: float
    h: ArrayFn
    H: ArrayFn
    lam: float
    h_bound: float
    mode_c: float
    analytic: bool
    breakpoints: tuple[float, ...] = ()
    shift: float = 0.0
    params: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    validated: bool = False

    def scaled(self, k: float) -> "ObjectiveSpec":
        """``k * h`` for ``k > 0``."""
        if not k > 0:
            raise ParameterError("scale factor must be positive")
        h, H = self.h, self.H
        return replace(
            self,
            name=f"{k}*{self.name}",
            h=lambda x: k * h(x),
            H=lambda x: k * H(x),
            lam=k * self.lam,
            h_bound=k * self.h_bound,
            shift=k * self.shift,
        )


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def make_interval_indicator(a: float, c: float, d: float) -> ObjectiveSpec:
    """Indicator of ``(c, d)``, so the bound is on ``P(c < X < d)``."""
    if not d > c:
        raise ParameterError(f"invalid interval ({c}, {d})")
    if c < a:
        raise ParameterError(f"interval must start at or above the threshold {a}, got c={c}")
    cs, ds = c - a, d - a

    def h(x):
        x = _as_array(x)
        return ((x > c) & (x < d)).astype(float)

    def H(x):
        x = _as_array(x)
        quad_part = 0.5 * (x - cs) ** 2
        lin_part = (ds - cs) * x - 0.5 * (ds * ds - cs * cs)
        return np.where(x <= cs, 0.0, np.where(x <= ds, quad_part, lin_part))

    return ObjectiveSpec(
        name="interval",
        a=a,
        h=h,
        H=H,
        lam=0.0,
        h_bound=1.0,
        mode_c=0.5 * (c + d),
        analytic=True,
        breakpoints=(c, d),
        params={"c": c, "d": d},
        validated=True,
    )


def make_constant(level: float, a: float = 0.0) -> ObjectiveSpec:
    if level < 0:
        raise ParameterError("constant level must be nonnegative")

    def h(x):
        return np.full_like(_as_array(x), level)

    def H(x):
        x = _as_array(x)
        return 0.5 * level * x * x

    return ObjectiveSpec(
        name="constant",
        a=a,
        h=h,
        H=H,
        lam=0.5 * level,
        h_bound=level,
        mode_c=math.inf,
        analytic=True,
        params={"level": level},
        validated=True,
    )


def make_stop_loss(a: float, l: float, u: float, cap: float) -> ObjectiveSpec:
    """Layer payoff ``min(max(x - l, 0), cap)`` with ``cap = u - l``."""
    if not (a <= l < u):
        raise ParameterError(f"need a <= l < u, got a={a}, l={l}, u={u}")
    if not math.isclose(cap, u - l, rel_tol=1e-12, abs_tol=1e-12):
        raise ParameterError(f"cap must equal u - l = {u - l}, got {cap}")
    cap = u - l
    ls, us = l - a, u - a

    def h(x):
        x = _as_array(x)
        return np.clip(x - l, 0.0, cap)

    def H(x):
        x = _as_array(x)
        t = np.clip(x - ls, 0.0, None)
        mid = t**3 / 6.0
        r = np.clip(x - us, 0.0, None)
        tail = cap**3 / 6.0 + 0.5 * cap**2 * r + 0.5 * cap * r * r
        return np.where(x <= us, mid, tail)

    return ObjectiveSpec(
        name="stoploss",
        a=a,
        h=h,
        H=H,
        lam=0.5 * cap,
        h_bound=cap,
        mode_c=math.inf,
        analytic=True,
        breakpoints=(l, u),
        params={"l": l, "u": u, "cap": cap},
        validated=True,
    )


def make_exp_utility(a: float, theta: float) -> ObjectiveSpec:
    """``h(x) = exp(-theta * x)``, the integrand of the entropic risk measure."""
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    scale = math.exp(-theta * a)

    def h(x):
        return np.exp(-theta * _as_array(x))

    def H(x):
        x = _as_array(x)
        tx = theta * x
        # series branch avoids cancellation in x/theta - (1 - e^{-theta x})/theta^2
        series = x * x * (0.5 - tx / 6.0 + tx * tx / 24.0 - tx**3 / 120.0)
        closed = x / theta + np.expm1(-tx) / theta**2
        return scale * np.where(tx < 1e-3, series, closed)

    return ObjectiveSpec(
        name="exputility",
        a=a,
        h=h,
        H=H,
        lam=0.0,
        h_bound=scale,
        mode_c=a,
        analytic=True,
        params={"theta": theta},
        validated=True,
    )


def make_newsvendor_shortfall(a: float, p: float, q: float) -> ObjectiveSpec:
    """Shortfall ``p * max(q - x, 0)``; ``p * min(q, x) = p * q - shortfall``."""
    if not p > 0:
        raise ParameterError(f"price must be positive, got {p}")
    if q <= a:
        obj = make_constant(0.0, a=a)
        return replace(obj, name="newsvendor", params={"p": p, "q": q}, flags=("q_below_threshold",))
    qs = q - a

    def h(x):
        return p * np.clip(q - _as_array(x), 0.0, None)

    def H(x):
        x = _as_array(x)
        y = np.minimum(x, qs)
        inner = p * (qs * y * y / 2.0 - y**3 / 6.0)
        return inner + np.where(x > qs, 0.5 * p * qs * qs * (x - qs), 0.0)

    return ObjectiveSpec(
        name="newsvendor",
        a=a,
        h=h,
        H=H,
        lam=0.0,
        h_bound=p * qs,
        mode_c=a,
        analytic=True,
        breakpoints=(q,),
        params={"p": p, "q": q},
        validated=True,
    )


def _vectorize(h: Callable) -> ArrayFn:
    probe = np.array([0.0, 1.0])
    try:
        out = np.asarray(h(probe), dtype=float)
        if out.shape == probe.shape:
            return lambda x: np.asarray(h(_as_array(x)), dtype=float)
    except Exception:
        pass
    vec = np.vectorize(lambda t: float(h(float(t))), otypes=[float])
    return lambda x: vec(_as_array(x))


def _validation_grid(a: float, mode_c: float, breakpoints, n: int = VALIDATION_POINTS) -> np.ndarray:
    scale = 1.0
    if math.isfinite(mode_c):
        scale = max(scale, abs(mode_c - a))
    for b in breakpoints:
        scale = max(scale, abs(b - a))
    grid = np.linspace(a, a + 100.0 * scale, n)
    extra = [b for b in breakpoints if b >= a]
    return np.unique(np.concatenate([grid, extra]))


def check_assumptions(h: ArrayFn, a: float, h_bound: float, mode_c: float, breakpoints=(), atol=None) -> None:
    """Sample-based check that ``h`` is bounded, nonnegative and quasi-concave about ``mode_c``.

    This is a heuristic guard on a finite grid, not a proof.
    """
    if not (math.isfinite(h_bound) and h_bound >= 0):
        raise AssumptionViolationError(f"h_bound must be finite and nonnegative, got {h_bound}")
    atol = 1e-12 * max(h_bound, 1.0) if atol is None else atol
    x = _validation_grid(a, mode_c, breakpoints)
    vals = h(x)
    if not np.all(np.isfinite(vals)):
        raise AssumptionViolationError("h is not finite on the validation grid")
    if vals.min() < -atol:
        raise AssumptionViolationError(f"h takes negative value {vals.min():.6g}")
    if vals.max() > h_bound + atol:
        i = int(vals.argmax())
        raise AssumptionViolationError(
            f"h({x[i]:.6g}) = {vals[i]:.6g} exceeds declared bound {h_bound}; unbounded h gives an infinite worst case"
        )
    diffs = np.diff(vals)
    left = x[1:] <= mode_c
    right = x[:-1] >= mode_c
    if np.any(diffs[left] < -atol):
        raise AssumptionViolationError(f"h decreases before its mode {mode_c}")
    if np.any(diffs[right] > atol):
        raise AssumptionViolationError(f"h increases after its mode {mode_c}")


def validate_objective(obj: ObjectiveSpec) -> ObjectiveSpec:
    if obj.validated:
        return obj
    check_assumptions(obj.h, obj.a, obj.h_bound, obj.mode_c, obj.breakpoints)
    if obj.lam < 0 or obj.lam > obj.h_bound / 2 + 1e-12 * max(obj.h_bound, 1.0):
        raise AssumptionViolationError(f"lambda must lie in [0, h_bound/2], got {obj.lam}")
    return replace(obj, validated=True)


class _DoubleIntegral:
    """``H(x) = x * G(x) - K(x)`` with ``G = int h`` and ``K = int v h``.

    Evaluation sorts the query points and integrates piece by piece between
    consecutive points and breakpoints, so each call costs one short
    quadrature per distinct point.
    """

    def __init__(self, h: ArrayFn, a: float, breakpoints, rtol: float = 1e-9):
        self.h = h
        self.a = a
        self.breaks = np.array(sorted(b - a for b in breakpoints if b > a), dtype=float)
        self.epsrel = rtol * 1e-2

    def _piece(self, lo: float, hi: float) -> tuple[float, float]:
        if hi <= lo:
            return 0.0, 0.0
        g = lambda v: float(self.h(np.array([v + self.a]))[0])
        G, _ = integrate.quad(g, lo, hi, epsabs=0.0, epsrel=self.epsrel, limit=200)
        K, _ = integrate.quad(lambda v: v * g(v), lo, hi, epsabs=0.0, epsrel=self.epsrel, limit=200)
        return G, K

    def __call__(self, x):
        x = _as_array(x)
        flat = x.ravel()
        if flat.size == 0:
            return np.zeros_like(x)
        if np.any(flat < 0):
            raise ParameterError("H is defined for shifted points x >= 0 only")
        targets = np.unique(flat)
        nodes = np.unique(np.concatenate([[0.0], targets, self.breaks[self.breaks < targets[-1]]]))
        G = np.zeros(nodes.size)
        K = np.zeros(nodes.size)
        for i in range(1, nodes.size):
            dg, dk = self._piece(nodes[i - 1], nodes[i])
            G[i] = G[i - 1] + dg
            K[i] = K[i - 1] + dk
        idx = np.searchsorted(nodes, flat)
        out = nodes[idx] * G[idx] - K[idx]
        return np.maximum(out, 0.0).reshape(x.shape)


def make_numeric(
    h: Callable,
    h_bound: float,
    lam: float,
    mode_c: float,
    a: float = 0.0,
    breakpoints=(),
    allow_shift: bool = False,
) -> ObjectiveSpec:
    """Wrap a user-supplied ``h`` with numerically integrated ``H``.

    ``lam`` must be declared; a mismatch against ``H(x)/x**2`` at large ``x``
    only raises an :class:`ObjectiveWarning`. With ``allow_shift`` an ``h``
    taking negative values is lifted by ``h_bound`` (its declared sup of
    ``|h|``) and the shift is recorded for the solvers to undo.
    """
    hv = _vectorize(h)
    flags = []
    shift = 0.0
    if allow_shift:
        x = _validation_grid(a, mode_c, breakpoints)
        if hv(x).min() < 0:
            shift = float(h_bound)
            base = hv
            hv = lambda x, base=base: base(x) + shift
            h_bound = 2.0 * h_bound
            lam = lam + shift / 2.0
            flags.append("shifted")
    check_assumptions(hv, a, h_bound, mode_c, breakpoints)
    if lam < 0 or lam > h_bound / 2 + 1e-12 * max(h_bound, 1.0):
        raise AssumptionViolationError(f"lambda must lie in [0, h_bound/2], got {lam}")
    H = _DoubleIntegral(hv, a, breakpoints)
    r4, r5 = (float(H(np.array([t]))[0]) / t**2 for t in (1e4, 1e5))
    lam_est = (10.0 * r5 - r4) / 9.0
    if abs(lam_est - lam) > 0.05 * max(lam, 1e-3 * max(h_bound, 1e-12)):
        flags.append("lambda_mismatch")
        warnings.warn(
            f"declared lambda {lam:.6g} disagrees with H(x)/x^2 extrapolation {lam_est:.6g}",
            ObjectiveWarning,
            stacklevel=2,
        )
    return ObjectiveSpec(
        name="numeric",
        a=a,
        h=hv,
        H=H,
        lam=float(lam),
        h_bound=float(h_bound),
        mode_c=float(mode_c),
        analytic=False,
        breakpoints=tuple(breakpoints),
        shift=shift,
        params={"lambda_extrapolated": lam_est},
        flags=tuple(flags),
        validated=True,
    )
