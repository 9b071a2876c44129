"""Worst-case bound when ``(beta, eta, nu)`` are only known up to confidence intervals.

The moment constraints become a box ``mu in [mu_lo, mu_hi]``,
``sigma in [sigma_lo, sigma_hi]`` and, because ``H`` is non-decreasing, the
optimum sits on one of two faces of that box:

* face A: mean pinned at ``mu_hi``, second moment ``rho`` free;
* face B: second moment pinned at ``sigma_hi``, mean ``omega`` free.

Each face is a two-parameter search over (face coordinate, first atom).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._search import golden_max
from .domain import (
    BoundResult,
    Consistency,
    IntervalParams,
    TailClass,
    TailParams,
    classify_moments,
    density_from_measure,
    interval_moment_params,
    triangle_density,
)
from .errors import ParameterError
from .objectives import ObjectiveSpec, validate_objective
from .solver_point import _check_w_domain, classify_tail, reduced_objective, two_point_measure

FACE_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class IntervalSearchConfig:
    outer_points: int = 201
    inner_points: int = 1_001
    refine_tol: float = 1e-10
    refine_max_iter: int = 200
    profile_factor: int = 4
    tie_rtol: float = 1e-9

    def __post_init__(self):
        if self.outer_points < 2 or self.inner_points < 3 or self.profile_factor < 1:
            raise ParameterError("search grids are too small")


def eval_W2(x1, omega: float, rho: float, obj: ObjectiveSpec, nu_hi: float):
    x1 = _check_w_domain(x1, omega, rho)
    out = reduced_objective(x1, omega, rho, obj.H, obj.lam, nu_hi)
    return float(out) if out.ndim == 0 else out


def reconstruct_K(x, x1: float, omega: float, rho: float, a: float, nu_hi: float):
    """Two-segment density: height ``nu_hi*omega`` at ``a``, kink at ``a + x1``."""
    if not (0.0 <= x1 < omega):
        raise ParameterError("x1 must lie in [0, omega); use the limiting triangle at x1 == omega")
    if not rho > omega * omega:
        raise ParameterError("rho must exceed omega^2")
    x = np.asarray(x, dtype=float)
    t = x - a
    dx = omega - x1
    p2 = dx * dx / (rho - 2 * omega * x1 + x1 * x1)
    end = (rho - omega * x1) / dx
    first = nu_hi * omega - nu_hi * t
    second = nu_hi * omega - nu_hi * x1 - nu_hi * p2 * (t - x1)
    out = np.where(t <= x1, first, np.where(t <= end, second, 0.0))
    out = np.where(t < 0, np.nan, np.maximum(out, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class _FaceMax:
    face: str
    value: float
    omega: float
    rho: float
    x1: float
    interior_value: float
    limit_value: float
    iterations: int


def _search_face(face, outer, fixed, obj, nu_hi, cfg) -> _FaceMax:
    """Maximize over (outer coordinate, t) with ``x1 = t * omega``."""
    lo_o, hi_o = outer
    if face == "A":
        om_rho = lambda o: (fixed, o)
    else:
        om_rho = lambda o: (o, fixed)

    def W(o, t):
        om, rho = om_rho(o)
        t = np.asarray(t, dtype=float)
        return reduced_objective(t * om, om, max(rho, om * om), obj.H, obj.lam, nu_hi)

    outer_grid = np.linspace(lo_o, hi_o, cfg.outer_points) if hi_o > lo_o else np.array([lo_o])
    tgrid = np.linspace(0.0, 1.0, cfg.inner_points)
    om_col, rho_col = om_rho(outer_grid[:, None])
    om_col = np.broadcast_to(om_col, rho_col.shape) if np.ndim(om_col) < np.ndim(rho_col) else om_col
    rho_col = np.maximum(rho_col, om_col * om_col)
    vals = reduced_objective(tgrid * om_col, om_col, rho_col, obj.H, obj.lam, nu_hi)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    best = (float(vals[i, j]), float(outer_grid[i]), float(tgrid[j]))

    # refine inside the winning outer cell: golden search over the outer
    # coordinate of the profile max_t W, then a golden polish of t
    o_lo = outer_grid[max(i - 1, 0)]
    o_hi = outer_grid[min(i + 1, outer_grid.size - 1)]
    o_cur, t_cur, v_cur = best[1], best[2], best[0]
    its = 0
    if j < tgrid.size - 1:
        tfine = np.linspace(0.0, 1.0, cfg.profile_factor * (cfg.inner_points - 1) + 1)[:-1]
        profile = lambda o: float(np.max(W(o, tfine)))
    else:
        tfine = None
        profile = lambda o: float(W(o, [1.0])[0])
    candidates = [o_cur, o_lo, o_hi]
    if o_hi > o_lo:
        o_new, _v, k, _w = golden_max(profile, o_lo, o_hi, cfg.refine_tol, cfg.refine_max_iter)
        its += k
        candidates.append(o_new)
    o_best = max(candidates, key=profile)
    if tfine is None:
        v_new = profile(o_best)
        if v_new > v_cur:
            o_cur, v_cur = o_best, v_new
    else:
        row = W(o_best, tfine)
        jt = int(np.argmax(row))
        t_lo, t_hi = tfine[max(jt - 1, 0)], (tfine[jt + 1] if jt + 1 < tfine.size else tfine[jt])
        t_best, v_best = float(tfine[jt]), float(row[jt])
        if t_hi > t_lo:
            t_new, v_new, k, _w = golden_max(lambda t: float(W(o_best, [t])[0]), t_lo, t_hi, cfg.refine_tol, cfg.refine_max_iter)
            its += k
            if v_new > v_best:
                t_best, v_best = t_new, v_new
        if v_best > v_cur:
            o_cur, t_cur, v_cur = o_best, t_best, v_best
    overall = max(v_cur, best[0])
    thresh = overall - cfg.tie_rtol * abs(overall)

    # as in the point solver, only grid points count as interior ties
    interior = vals[:, :-1]
    hits = np.argwhere(interior >= thresh)
    if hits.size:
        ii, jj = hits[np.lexsort((hits[:, 0], hits[:, 1]))[0]]
        o_star, t_star, iv = float(outer_grid[ii]), float(tgrid[jj]), float(interior[ii, jj])
    elif j < tgrid.size - 1:
        o_star, t_star, iv = o_cur, t_cur, v_cur
    else:
        ii, jj = np.unravel_index(int(np.argmax(interior)), interior.shape)
        iv = float(interior[ii, jj])
        o_star, t_star = o_cur, 1.0
    om, rho = om_rho(o_star)
    limit_value = float(W(o_star, [1.0])[0])
    return _FaceMax(face, overall, om, max(rho, om * om), t_star * om, iv, limit_value, its)


def solve_interval(ip: IntervalParams, obj: ObjectiveSpec, cfg: IntervalSearchConfig | None = None) -> BoundResult:
    """Worst-case ``E[h(X); X >= a]`` over convex tails consistent with the intervals."""
    cfg = cfg or IntervalSearchConfig()
    obj = validate_objective(obj)
    mb = interval_moment_params(ip)
    params = {
        "a": ip.a,
        "beta_lo": ip.beta_lo,
        "beta_hi": ip.beta_hi,
        "eta_lo": ip.eta_lo,
        "eta_hi": ip.eta_hi,
        "nu_hi": ip.nu_hi,
        "alpha": ip.alpha,
        "mu_lo": mb.mu_lo,
        "mu_hi": mb.mu_hi,
        "sigma_lo": mb.sigma_lo,
        "sigma_hi": mb.sigma_hi,
    }
    state = classify_moments(mb.mu_lo, mb.sigma_hi)
    if state is Consistency.INFEASIBLE:
        return BoundResult(
            None,
            TailClass.INFEASIBLE,
            diagnostics={"params": params, "reason": "eta_lo^2 > 2*beta_hi*nu_hi: no convex tail matches"},
        )
    correction = obj.shift * ip.beta_lo
    if state is Consistency.BOUNDARY:
        value = ip.nu_hi * float(obj.H(np.array([mb.mu_lo]))[0]) - correction
        return BoundResult(
            value,
            TailClass.DEGENERATE_UNIQUE,
            density=triangle_density(ip.a, ip.eta_lo, ip.nu_hi),
            maximizer={"x1_star": mb.mu_lo, "omega_star": mb.mu_lo, "rho_star": mb.sigma_hi},
            diagnostics={"params": params, "face": "boundary"},
        )

    faces = []
    rho_lo = max(mb.sigma_lo, mb.mu_hi**2)
    if rho_lo <= mb.sigma_hi:
        faces.append(_search_face("A", (rho_lo, mb.sigma_hi), mb.mu_hi, obj, ip.nu_hi, cfg))
    om_hi = min(mb.mu_hi, math.sqrt(mb.sigma_hi))
    faces.append(_search_face("B", (mb.mu_lo, om_hi), mb.sigma_hi, obj, ip.nu_hi, cfg))
    win = faces[0]
    if len(faces) == 2 and faces[1].value > win.value + FACE_TIE_RTOL * abs(win.value):
        win = faces[1]

    tail = classify_tail(win.interior_value, win.value, obj.lam, cfg.tie_rtol)
    gap = win.rho - win.omega**2
    if tail is TailClass.ATTAINED_LIGHT and win.x1 < win.omega and gap > 0:
        meas = two_point_measure(win.x1, win.omega, win.rho)
        tail_params = TailParams(ip.a, ip.nu_hi * win.rho / 2, ip.nu_hi * win.omega, ip.nu_hi)
        density = density_from_measure(meas, tail_params)
        maximizer = {
            "x1_star": win.x1,
            "omega_star": win.omega,
            "rho_star": win.rho,
            "x2_star": meas.support[1],
            "p1_star": meas.weights[0],
            "p2_star": meas.weights[1],
        }
    else:
        if tail is TailClass.ATTAINED_LIGHT:
            # only reachable with lam == 0 and no interior optimum on the grid
            density = triangle_density(ip.a, ip.nu_hi * win.omega, ip.nu_hi)
        else:
            density = triangle_density(ip.a, ip.nu_hi * win.omega, ip.nu_hi, limiting=True)
        maximizer = {"x1_star": win.omega, "omega_star": win.omega, "rho_star": win.rho}
    diagnostics = {
        "params": params,
        "face": win.face,
        "face_values": {f.face: f.value - correction for f in faces},
        "grid_points": [cfg.outer_points, cfg.inner_points],
        "refine_iterations": sum(f.iterations for f in faces),
        "achieved_tolerance": cfg.refine_tol,
        "lambda": obj.lam,
    }
    return BoundResult(win.value - correction, tail, density, maximizer, diagnostics)

