"""Worst-case bound with exactly known ``(beta, eta, nu)``.

The density problem reduces to maximizing ``nu * E[H(X)]`` over measures on
``[0, inf)`` with ``E[X] = mu`` and ``E[X^2] = sigma``. Two atoms suffice
for quasi-concave ``h``; fixing the first atom ``x1`` pins down the rest, so
the bound is a one-dimensional search of the reduced objective over
``[0, mu]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._search import golden_max
from .domain import (
    BoundResult,
    Consistency,
    MomentMeasure,
    MomentParams,
    TailClass,
    TailParams,
    consistency_check,
    density_from_measure,
    to_moment_params,
    triangle_density,
)
from .errors import ParameterError
from .objectives import ObjectiveSpec, validate_objective

SINGULARITY_GUARD = 1e-8


@dataclass(frozen=True)
class LineSearchConfig:
    grid_points: int = 10_001
    refine_tol: float = 1e-10
    refine_max_iter: int = 200
    tie_rtol: float = 1e-9

    def __post_init__(self):
        if self.grid_points < 3:
            raise ParameterError("grid_points must be at least 3")
        if not self.refine_tol > 0:
            raise ParameterError("refine_tol must be positive")


def reduced_objective(x1, omega, rho, H, lam: float, scale: float) -> np.ndarray:
    """Value of the best two-atom measure with first atom ``x1``.

    Atoms ``x1`` and ``x2 = (rho - omega*x1)/(omega - x1)`` carry weights
    ``(rho - omega^2)/D`` and ``(omega - x1)^2/D`` with
    ``D = rho - 2*omega*x1 + x1^2``. At ``x1 -> omega`` the second atom runs
    off to infinity and the value tends to ``scale*(H(omega) + lam*(rho - omega^2))``.
    ``omega`` and ``rho`` may be arrays broadcasting against ``x1``.
    """
    x1 = np.asarray(x1, dtype=float)
    gap = rho - omega * omega
    near = (omega - x1) < SINGULARITY_GUARD * omega
    xs = np.where(near, 0.0, x1)
    dx = omega - xs
    denom = gap + dx * dx
    x2 = (rho - omega * xs) / dx
    regular = scale * (gap * H(xs) + dx * dx * H(x2)) / denom
    omega_arr = np.asarray(omega, dtype=float)
    limit = scale * (H(omega_arr.reshape(-1)).reshape(omega_arr.shape) + lam * gap)
    return np.where(near, limit, regular)


def _check_w_domain(x1, omega, rho):
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 < 0) or np.any(x1 > omega * (1 + 1e-15)):
        raise ParameterError(f"x1 must lie in [0, {omega}]")
    if rho < omega * omega * (1 - 1e-12):
        raise ParameterError(f"second moment {rho} is below squared mean {omega * omega}")
    return np.minimum(x1, omega)


def eval_W(x1, m: MomentParams, obj: ObjectiveSpec, nu: float):
    x1 = _check_w_domain(x1, m.mu, m.sigma)
    out = reduced_objective(x1, m.mu, m.sigma, obj.H, obj.lam, nu)
    return float(out) if out.ndim == 0 else out


def classify_tail(interior_value: float, overall_value: float, lam: float, tie_rtol: float = 1e-9) -> TailClass:
    """Attained unless only the ``x1 = mu`` limit reaches the maximum.

    With ``lam == 0`` an optimal density always exists.
    """
    if lam == 0.0:
        return TailClass.ATTAINED_LIGHT
    if interior_value >= overall_value - tie_rtol * abs(overall_value):
        return TailClass.ATTAINED_LIGHT
    return TailClass.LIMITING_HEAVY


@dataclass(frozen=True)
class _LineMax:
    value: float
    interior_value: float
    interior_x1: float
    limit_value: float
    iterations: int
    width: float


def maximize_line(omega: float, rho: float, obj: ObjectiveSpec, scale: float, cfg: LineSearchConfig) -> _LineMax:
    """Dense grid on ``[0, omega]`` then golden-section around the best cell.

    Among near-ties (``tie_rtol``) the smallest ``x1`` is kept.
    """
    n = cfg.grid_points
    grid = np.linspace(0.0, omega, n)
    vals = reduced_objective(grid, omega, rho, obj.H, obj.lam, scale)
    limit_value = float(vals[-1])
    imax = int(np.argmax(vals))
    lo, hi = grid[max(imax - 1, 0)], grid[min(imax + 1, n - 1)]
    f = lambda t: float(reduced_objective(np.array([t]), omega, rho, obj.H, obj.lam, scale)[0])
    xr, vr, its, width = golden_max(f, lo, hi, cfg.refine_tol, cfg.refine_max_iter)
    overall = max(float(vals[imax]), vr)
    thresh = overall - cfg.tie_rtol * abs(overall)

    # interior ties count only on the grid: near mu the objective tends to
    # its limit continuously, so refined points there prove nothing
    interior = vals[:-1]
    hits = np.nonzero(interior >= thresh)[0]
    if hits.size:
        ix, iv = float(grid[hits[0]]), float(interior[hits[0]])
    elif imax < n - 1:
        ix, iv = (xr, vr) if vr >= vals[imax] else (float(grid[imax]), float(vals[imax]))
    else:
        j = int(np.argmax(interior))
        ix, iv = float(grid[j]), float(interior[j])
    return _LineMax(overall, iv, ix, limit_value, its, width)


def two_point_measure(x1: float, omega: float, rho: float) -> MomentMeasure:
    dx = omega - x1
    denom = rho - omega * omega + dx * dx
    x2 = (rho - omega * x1) / dx
    return MomentMeasure((x1, x2), ((rho - omega * omega) / denom, dx * dx / denom))


def solve_point(p: TailParams, obj: ObjectiveSpec, cfg: LineSearchConfig | None = None) -> BoundResult:
    """Worst-case ``E[h(X); X >= a]`` over convex tails matching ``p``."""
    cfg = cfg or LineSearchConfig()
    obj = validate_objective(obj)
    m = to_moment_params(p)
    state = consistency_check(m)
    params = {"a": p.a, "beta": p.beta, "eta": p.eta, "nu": p.nu, "mu": m.mu, "sigma": m.sigma}
    if state is Consistency.INFEASIBLE:
        return BoundResult(
            None,
            TailClass.INFEASIBLE,
            diagnostics={"params": params, "reason": "eta^2 > 2*beta*nu: no convex tail matches"},
        )
    correction = obj.shift * p.beta
    if state is Consistency.BOUNDARY:
        value = p.nu * float(obj.H(np.array([m.mu]))[0]) - correction
        return BoundResult(
            value,
            TailClass.DEGENERATE_UNIQUE,
            density=triangle_density(p.a, p.eta, p.nu),
            maximizer={"x1_star": m.mu},
            diagnostics={"params": params, "grid_points": 0, "refine_iterations": 0, "achieved_tolerance": 0.0},
        )

    res = maximize_line(m.mu, m.sigma, obj, p.nu, cfg)
    tail = classify_tail(res.interior_value, res.value, obj.lam, cfg.tie_rtol)
    diagnostics = {
        "params": params,
        "grid_points": cfg.grid_points,
        "refine_iterations": res.iterations,
        "achieved_tolerance": res.width,
        "limit_value": res.limit_value - correction,
        "lambda": obj.lam,
    }
    if tail is TailClass.ATTAINED_LIGHT:
        x1 = res.interior_x1
        meas = two_point_measure(x1, m.mu, m.sigma)
        density = density_from_measure(meas, p)
        maximizer = {
            "x1_star": x1,
            "x2_star": meas.support[1],
            "p1_star": meas.weights[0],
            "p2_star": meas.weights[1],
        }
    else:
        density = triangle_density(p.a, p.eta, p.nu, limiting=True)
        maximizer = {"x1_star": m.mu}
    return BoundResult(res.value - correction, tail, density, maximizer, diagnostics)
