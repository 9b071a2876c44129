"""Brute-force cross-checks for the solvers.

Nothing here reuses the solvers' closed forms: moment systems are solved by
plain linear algebra (plus bisection for the second atom), and densities are
integrated by quadrature. Grids are truncated, so these oracles can only
certify bounds that are attained by a finite measure.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate

from .domain import (
    Consistency,
    MomentMeasure,
    MomentParams,
    PiecewiseLinearDensity,
    TailParams,
    consistency_check,
    density_from_measure,
    to_moment_params,
    triangle_density,
)
from .errors import ParameterError, RejectionBudgetError
from .objectives import ObjectiveSpec

WEIGHT_TOL = 1e-12


def _H(obj: ObjectiveSpec, x) -> np.ndarray:
    return np.asarray(obj.H(np.asarray(x, dtype=float)), dtype=float)


def _second_atom(x1: np.ndarray, mu: float, sigma: float, iters: int = 200) -> np.ndarray:
    """Bisection for ``x2`` such that the two-atom measure on ``(x1, x2)`` has mean ``mu``
    and second moment ``sigma``."""

    def resid(x2):
        p2 = (mu - x1) / (x2 - x1)
        return (1 - p2) * x1**2 + p2 * x2**2 - sigma

    lo = np.full_like(x1, mu)
    hi = np.full_like(x1, 2.0 * mu + 1.0)
    for _ in range(2000):
        bad = resid(hi) < 0
        if not bad.any():
            break
        hi = np.where(bad, 2.0 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = resid(mid) < 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _weights(support: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Batched solve of ``V^T p = (1, mu, sigma)`` for rows of ``support``."""
    k = support.shape[-1]
    V = support[..., None, :] ** np.arange(k)[:, None]
    rhs = np.broadcast_to(np.array([1.0, mu, sigma][:k]), support.shape)
    return np.linalg.solve(V, rhs[..., None])[..., 0]


def grid_oracle_two_point(m: MomentParams, obj: ObjectiveSpec, nu: float, grid: int = 20_001) -> float:
    """Best ``nu * E[H]`` over two-atom measures with first atom on a uniform grid of ``[0, mu)``.

    The ``x1 -> mu`` limit ``nu * (H(mu) + lam*(sigma - mu^2))`` is included.
    """
    mu, sigma = m.mu, m.sigma
    gap = sigma - mu * mu
    h_mu = float(_H(obj, [mu])[0])
    if consistency_check(m) is Consistency.BOUNDARY:
        return nu * h_mu - obj.shift * nu * sigma / 2
    x1 = np.linspace(0.0, mu, grid)[:-1]
    x2 = _second_atom(x1, mu, sigma)
    p = _weights(np.stack([x1, x2], axis=-1), mu, sigma)
    vals = nu * (p[:, 0] * _H(obj, x1) + p[:, 1] * _H(obj, x2))
    best = max(float(vals.max()), nu * (h_mu + obj.lam * max(gap, 0.0)))
    return best - obj.shift * nu * sigma / 2


def measure_value(support, m: MomentParams, obj: ObjectiveSpec, nu: float) -> float:
    """``nu * E[H]`` for the measure on ``support`` matching ``m``; repeated atoms are merged.

    Returns ``-inf`` when no nonnegative weights exist.
    """
    atoms = np.unique(np.asarray(support, dtype=float))
    if atoms.size > 3:
        raise ParameterError("at most three atoms")
    if atoms.size == 1:
        ok = math.isclose(atoms[0], m.mu, rel_tol=1e-12) and math.isclose(m.sigma, m.mu**2, rel_tol=1e-12)
        return nu * float(_H(obj, atoms)[0]) - obj.shift * nu * m.sigma / 2 if ok else -math.inf
    p = _weights(atoms[None, :], m.mu, m.sigma)[0]
    # two atoms fix the weights from the mean alone; the second moment must then agree
    if atoms.size == 2 and abs(float(p @ atoms**2) - m.sigma) > 1e-9 * max(m.sigma, 1.0):
        return -math.inf
    if np.any(p < -WEIGHT_TOL):
        return -math.inf
    return nu * float(p @ _H(obj, atoms)) - obj.shift * nu * m.sigma / 2


def grid_oracle_three_point(m: MomentParams, obj: ObjectiveSpec, nu: float, grid: int = 60) -> float:
    """Best ``nu * E[H]`` over three-atom measures with atoms on a uniform grid.

    The grid spans ``[0, mu + 20*sqrt(sigma - mu^2)]``; triples needing a
    negative weight are rejected. Returns ``-inf`` if no triple is feasible.
    """
    mu, sigma = m.mu, m.sigma
    if consistency_check(m) is Consistency.BOUNDARY:
        return nu * float(_H(obj, [mu])[0]) - obj.shift * nu * sigma / 2
    xmax = mu + 20.0 * math.sqrt(sigma - mu * mu)
    pts = np.linspace(0.0, xmax, grid)
    triples = np.array(list(itertools.combinations(range(grid), 3)))
    support = pts[triples]
    p = _weights(support, mu, sigma)
    ok = np.all(p >= -WEIGHT_TOL, axis=1)
    if not ok.any():
        return -math.inf
    Hs = _H(obj, pts)[triples[ok]]
    vals = nu * np.einsum("ij,ij->i", p[ok], Hs)
    return float(vals.max()) - obj.shift * nu * sigma / 2


def random_feasible_density(m: MomentParams, p: TailParams, seed=None, budget: int = 10_000) -> PiecewiseLinearDensity:
    """Random feasible tail density built from a random two- or three-atom measure."""
    mp = to_moment_params(p)
    if not (math.isclose(mp.mu, m.mu, rel_tol=1e-12) and math.isclose(mp.sigma, m.sigma, rel_tol=1e-12)):
        raise ParameterError("moment parameters do not match the tail parameters")
    if consistency_check(m) is Consistency.BOUNDARY:
        return triangle_density(p.a, p.eta, p.nu)
    rng = np.random.default_rng(seed)
    mu, sigma = m.mu, m.sigma
    sd = math.sqrt(sigma - mu * mu)
    if rng.random() < 0.5:
        x1 = rng.uniform(0.0, mu)
        x2 = float(_second_atom(np.array([x1]), mu, sigma)[0])
        w = _weights(np.array([[x1, x2]]), mu, sigma)[0]
        return density_from_measure(MomentMeasure((x1, x2), tuple(w)), p)
    xmax = mu + 10.0 * sd
    for _ in range(budget):
        xs = np.sort(rng.uniform(0.0, xmax, 3))
        if np.min(np.diff(xs)) <= 1e-9 * xmax:
            continue
        w = _weights(xs[None, :], mu, sigma)[0]
        if np.all(w > 0):
            return density_from_measure(MomentMeasure(tuple(xs), tuple(w)), p)
    raise RejectionBudgetError(f"no feasible three-atom measure in {budget} draws; sigma is too close to mu^2")


def quadrature_objective(f: PiecewiseLinearDensity, obj: ObjectiveSpec, tol: float = 1e-9) -> float:
    """``int h(x) f(x) dx`` over the support of ``f``, segment by segment."""
    total = 0.0
    for x0, x1, _, _ in f.segments():
        cuts = [b for b in obj.breakpoints if x0 < b < x1]
        val, _ = integrate.quad(
            lambda x: float(obj.h(np.array([x]))[0]) * float(f(x)),
            x0,
            x1,
            points=cuts or None,
            epsabs=tol,
            epsrel=tol,
            limit=200,
        )
        total += val
    return total - obj.shift * f.mass()
