"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 infeasible parameters, 3 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings

import numpy as np

from . import __version__
from .applications import (
    CoverageConfig,
    KnownDistribution,
    coverage_study,
    entropic_risk_exact,
    entropic_risk_worst_case,
    pareto_ratio_heatmap,
    robust_newsvendor,
)
from .domain import BoundResult, IntervalParams, TailParams
from .errors import ConvexTailError, FitFailureError, ParameterError, ThresholdInvalidError
from .estimation import KdeConfig, Sample, bootstrap_calibration, suggest_threshold
from .objectives import (
    make_constant,
    make_exp_utility,
    make_interval_indicator,
    make_newsvendor_shortfall,
    make_stop_loss,
)
from .solver_interval import solve_interval
from .solver_point import solve_point

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_CALIBRATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what} {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    return vals


def parse_objective(text: str, a: float):
    """``interval:c,d | stoploss:l,u,cap | exputility:theta | constant:k | newsvendor:p,q``."""
    kind, _, args = text.partition(":")
    builders = {
        "interval": (2, lambda v: make_interval_indicator(a, *v)),
        "stoploss": (3, lambda v: make_stop_loss(a, *v)),
        "exputility": (1, lambda v: make_exp_utility(a, *v)),
        "constant": (1, lambda v: make_constant(v[0], a)),
        "newsvendor": (2, lambda v: make_newsvendor_shortfall(a, *v)),
    }
    if kind not in builders:
        raise UsageError(f"unknown objective {kind!r}; choose from {', '.join(builders)}")
    n, build = builders[kind]
    return build(_floats(args, n, f"{kind} objective"))


def parse_distribution(text: str) -> KnownDistribution:
    """``exp:rate | lognormal:logmu,logsigma | lognormal-moments:mean,sd | pareto:index``."""
    kind, _, args = text.partition(":")
    if kind in ("exp", "exponential"):
        return KnownDistribution.exponential(*_floats(args, 1, "rate"))
    if kind == "lognormal":
        return KnownDistribution.lognormal(*_floats(args, 2, "lognormal parameters"))
    if kind == "lognormal-moments":
        return KnownDistribution.lognormal_from_mean_sd(*_floats(args, 2, "mean,sd"))
    if kind == "pareto":
        return KnownDistribution.pareto(*_floats(args, 1, "index"))
    raise UsageError(f"unknown distribution {kind!r}")


def parse_intervals(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in text.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise UsageError(f"interval {part!r} must look like c:d")
        out.append(tuple(_floats(f"{lo},{hi}", 2, "interval")))
    return tuple(out)


def read_sample_csv(path: str) -> np.ndarray:
    """Single numeric column; an optional header and ``#`` comment lines are skipped."""
    vals = []
    seen_line = False
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                    continue
                try:
                    vals.append(float(row[0]))
                except ValueError:
                    if seen_line:
                        raise UsageError(f"{path}: non-numeric value {row[0]!r}") from None
                seen_line = True
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return np.asarray(vals, dtype=float)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def result_to_json(res: BoundResult, params_used: dict, extra: dict | None = None) -> dict:
    m = res.maximizer
    doc = {
        "value": res.value,
        "tail_class": res.tail_class.value,
        "x1_star": m.get("x1_star"),
        "omega_star": m.get("omega_star"),
        "rho_star": m.get("rho_star"),
        "density": res.density.to_dict() if res.density is not None else None,
        "params_used": params_used,
        "diagnostics": dict(res.diagnostics, **{k: v for k, v in m.items() if k not in ("x1_star", "omega_star", "rho_star")}),
        "version": __version__,
    }
    if extra:
        doc.update(extra)
    return _jsonable(doc)


def _emit(text: str, out: str | None) -> None:
    """Write ``text`` to ``out`` atomically, or to stdout."""
    if not out:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".convextail-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _infeasible(doc: dict, condition: str, out) -> int:
    _emit(_dump_json(doc), out)
    print(f"infeasible: {condition}; no density convex beyond a matches these parameters", file=sys.stderr)
    return EXIT_INFEASIBLE


def cmd_bound(args) -> int:
    try:
        p = TailParams(args.a, args.beta, args.eta, args.nu)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    obj = parse_objective(args.objective, args.a)
    res = solve_point(p, obj)
    params = {"a": p.a, "beta": p.beta, "eta": p.eta, "nu": p.nu, "objective": args.objective}
    doc = result_to_json(res, params)
    if not res.feasible:
        return _infeasible(doc, "eta^2 > 2*beta*nu", args.out)
    _emit(_dump_json(doc), args.out)
    return EXIT_OK


def _calibrate(args):
    data = read_sample_csv(args.data)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cal = bootstrap_calibration(Sample(data), args.a, args.alpha, args.bootstrap, KdeConfig(), args.seed)
    except (ThresholdInvalidError, ParameterError) as exc:
        raise _CalibrationFailed(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return data, cal


class _CalibrationFailed(Exception):
    pass


def _calibration_json(cal) -> dict:
    ip, pt = cal.intervals, cal.point
    return {
        "intervals": {
            "a": ip.a,
            "beta_lo": ip.beta_lo,
            "beta_hi": ip.beta_hi,
            "eta_lo": ip.eta_lo,
            "eta_hi": ip.eta_hi,
            "nu_hi": ip.nu_hi,
            "alpha": ip.alpha,
        },
        "point_estimates": {
            "beta": pt.beta,
            "eta": pt.eta,
            "nu": pt.nu,
            "bandwidth": pt.bandwidth,
            "derivative_bandwidth": pt.derivative_bandwidth,
        },
        "level_per_parameter": cal.level_per_parameter,
        "replicates": cal.replicates,
        "seed": cal.seed,
        "clamped": list(cal.clamped),
    }


def cmd_bound_ci(args) -> int:
    explicit = [args.beta_lo, args.beta_hi, args.eta_lo, args.eta_hi, args.nu_hi]
    extra = {}
    if args.data:
        if any(v is not None for v in explicit):
            raise UsageError("give either --data or explicit interval bounds, not both")
        _, cal = _calibrate(args)
        ip = cal.intervals
        extra["calibration"] = _calibration_json(cal)
    else:
        if any(v is None for v in explicit):
            raise UsageError("need --beta-lo --beta-hi --eta-lo --eta-hi --nu-hi, or --data")
        try:
            ip = IntervalParams(args.a, *explicit, alpha=args.alpha)
        except ParameterError as exc:
            raise UsageError(str(exc)) from None
    obj = parse_objective(args.objective, args.a)
    res = solve_interval(ip, obj)
    params = dict(res.diagnostics.get("params", {}), objective=args.objective)
    doc = result_to_json(res, params, extra)
    if not res.feasible:
        return _infeasible(doc, "eta_lo^2 > 2*beta_hi*nu_hi", args.out)
    _emit(_dump_json(doc), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    data, cal = _calibrate(args)
    doc = _calibration_json(cal)
    try:
        sug = suggest_threshold(data)
        doc["suggested_threshold"] = {"threshold": sug.threshold, "points_above": sug.points_above, "mode": sug.mode}
    except ConvexTailError as exc:
        doc["suggested_threshold"] = None
        doc["suggestion_note"] = str(exc)
    doc["n"] = int(data.size)
    doc["version"] = __version__
    _emit(_dump_json(_jsonable(doc)), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = CoverageConfig(
            truth=parse_distribution(args.truth),
            a=args.a,
            intervals=parse_intervals(args.intervals),
            replications=args.reps,
            sample_size=args.n,
            alpha=args.alpha,
            B=args.bootstrap,
            seed=args.seed,
            gpd_threshold=args.gpd_threshold,
        )
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = coverage_study(cfg, args.method, args.workers)
    text = _csv_text(
        ["c", "d", "truth", "mean_upper_bound", "coverage", "failures"],
        [(r.c, r.d, r.truth, r.mean_upper_bound, r.coverage, r.failures) for r in rows],
    )
    _emit(text, args.out)
    return EXIT_OK


def _threshold(args, dist: KnownDistribution) -> float:
    if (args.a is None) == (args.a_pct is None):
        raise UsageError("give exactly one of --a and --a-pct")
    if args.a is not None:
        return args.a
    if not 0 < args.a_pct < 1:
        raise UsageError("--a-pct must lie in (0, 1)")
    return float(dist.quantile(args.a_pct))


def cmd_app_entropic(args) -> int:
    dist = parse_distribution(args.dist)
    a = _threshold(args, dist)
    rows = []
    for th in _floats(args.theta, what="theta list"):
        if not th > 0:
            raise UsageError("theta must be positive")
        rows.append((th, entropic_risk_worst_case(dist, a, th), entropic_risk_exact(dist, th)))
    _emit(_csv_text(["theta", "worst_case", "exact"], rows), args.out)
    return EXIT_OK


def cmd_app_newsvendor(args) -> int:
    dist = parse_distribution(args.dist)
    a = _threshold(args, dist)
    tail_flags = [args.beta, args.eta, args.nu]
    if any(v is not None for v in tail_flags) and any(v is None for v in tail_flags):
        raise UsageError("--beta, --eta and --nu go together")
    tail = TailParams(a, *tail_flags) if args.beta is not None else None
    q_range = None
    if args.q_max is not None:
        q_range = (args.q_min, args.q_max)
    try:
        res = robust_newsvendor(dist, a, args.p, args.c, q_range, tail, args.points)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    tp = tail or dist.tail_params(a)
    doc = {
        "q_star": res.q_star,
        "value": res.value,
        "params_used": {"a": a, "beta": tp.beta, "eta": tp.eta, "nu": tp.nu, "p": args.p, "c": args.c},
        "curve": [{"q": q, "value": v} for q, v in res.curve],
        "version": __version__,
    }
    _emit(_dump_json(_jsonable(doc)), args.out)
    return EXIT_OK


def cmd_app_heatmap(args) -> int:
    cells = parse_intervals(args.cells)
    try:
        out = pareto_ratio_heatmap(args.a_pct, cells, args.index)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    rows = [(c.a_pct, c.c_pct, c.d_pct, c.truth, c.bound, c.ratio) for c in out]
    _emit(_csv_text(["a_pct", "c_pct", "d_pct", "truth", "bound", "ratio"], rows), args.out)
    return EXIT_OK


def _add_calibration_flags(p, required: bool):
    p.add_argument("--data", required=required, help="CSV file with one numeric column")
    p.add_argument("--alpha", type=float, default=0.05, help="joint miscoverage (default 0.05)")
    p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="convextail", description="Worst-case tail bounds under a convex-density assumption.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    objective_help = "interval:c,d | stoploss:l,u,cap | exputility:theta | constant:k | newsvendor:p,q"
    p = sub.add_parser("bound", help="bound with known (beta, eta, nu)")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--objective", required=True, help=objective_help)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("bound-ci", help="bound with interval-valued parameters or data")
    p.add_argument("--a", type=float, required=True)
    for flag in ("--beta-lo", "--beta-hi", "--eta-lo", "--eta-hi", "--nu-hi"):
        p.add_argument(flag, type=float)
    _add_calibration_flags(p, required=False)
    p.add_argument("--objective", required=True, help=objective_help)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound_ci)

    p = sub.add_parser("estimate", help="bootstrap intervals for (beta, eta, nu) from data")
    p.add_argument("--a", type=float, required=True)
    _add_calibration_flags(p, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="coverage study against a known truth")
    p.add_argument("--truth", default="lognormal:0,0.5")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--a", type=float, default=3.1)
    p.add_argument("--intervals", default="4:5,5:6,6:7,7:8,8:9,9:10")
    p.add_argument("--method", choices=["worstcase", "gpd"], default="worstcase")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--gpd-threshold", type=float, default=1.8)
    p.add_argument("--seed", type=int, default=2016)
    p.add_argument("--workers", type=int, help="process count (default from CONVEXTAIL_THREADS, else 1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    app = sub.add_parser("app", help="worked applications")
    app_sub = app.add_subparsers(dest="app", required=True, parser_class=_Parser)

    p = app_sub.add_parser("entropic", help="worst-case entropic risk over a theta grid (CSV)")
    p.add_argument("--dist", default="exp:1")
    p.add_argument("--a", type=float)
    p.add_argument("--a-pct", type=float)
    p.add_argument("--theta", default="0.5,1,2,5,10", help="comma-separated theta values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_app_entropic)

    p = app_sub.add_parser("newsvendor", help="robust stock level and profit curve (JSON)")
    p.add_argument("--dist", default="lognormal-moments:50,20")
    p.add_argument("--a", type=float)
    p.add_argument("--a-pct", type=float)
    p.add_argument("--p", type=float, default=7.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--beta", type=float, help="override the tail probability beyond a")
    p.add_argument("--eta", type=float, help="override the density at a")
    p.add_argument("--nu", type=float, help="override the negated density slope at a")
    p.add_argument("--q-min", type=float, default=0.0)
    p.add_argument("--q-max", type=float, help="default: 95th percentile of --dist")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_app_newsvendor)

    p = app_sub.add_parser("heatmap", help="Pareto bound/truth ratios per percentile cell (CSV)")
    p.add_argument("--a-pct", type=float, required=True)
    p.add_argument("--cells", required=True, help="comma-separated c:d percentile pairs")
    p.add_argument("--index", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_app_heatmap)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_CalibrationFailed, FitFailureError) as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ConvexTailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
