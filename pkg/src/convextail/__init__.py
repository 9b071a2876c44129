"""Worst-case bounds on tail expectations for densities that are convex beyond a threshold."""

__version__ = "0.1.0"

from .domain import (
    BoundResult,
    Consistency,
    IntervalParams,
    MomentMeasure,
    MomentParams,
    PiecewiseLinearDensity,
    TailClass,
    TailParams,
    consistency_check,
    density_from_measure,
    to_moment_params,
    verify_density_feasibility,
)
from .errors import (
    AssumptionViolationError,
    CalibrationMismatchError,
    ConvexTailError,
    FitFailureError,
    InfeasibleError,
    ParameterError,
    RejectionBudgetError,
    ThresholdInvalidError,
)
from .objectives import (
    ObjectiveSpec,
    make_constant,
    make_exp_utility,
    make_interval_indicator,
    make_newsvendor_shortfall,
    make_numeric,
    make_stop_loss,
)
from .solver_interval import solve_interval
from .solver_point import solve_point

__all__ = [
    "BoundResult",
    "Consistency",
    "IntervalParams",
    "MomentMeasure",
    "MomentParams",
    "PiecewiseLinearDensity",
    "TailClass",
    "TailParams",
    "consistency_check",
    "density_from_measure",
    "to_moment_params",
    "verify_density_feasibility",
    "AssumptionViolationError",
    "CalibrationMismatchError",
    "ConvexTailError",
    "FitFailureError",
    "InfeasibleError",
    "ParameterError",
    "RejectionBudgetError",
    "ThresholdInvalidError",
    "ObjectiveSpec",
    "make_constant",
    "make_exp_utility",
    "make_interval_indicator",
    "make_newsvendor_shortfall",
    "make_numeric",
    "make_stop_loss",
    "solve_interval",
    "solve_point",
]
