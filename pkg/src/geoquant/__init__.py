"""Regularized geometric quantiles of finite discrete measures."""

from .core import Certificate, QuantileIndex, certify_quantile, dist_fn, gradient, hessian, objective
from .errors import GeoquantError
from .measure import DiscreteMeasure, from_points, sample
from .regularizer import Regularizer, parse_regularizer
from .solver import QuantileSolution, SolverOptions, Status, contour, quantile

__all__ = [
    "Certificate", "DiscreteMeasure", "GeoquantError", "QuantileIndex", "QuantileSolution",
    "Regularizer", "SolverOptions", "Status", "certify_quantile", "contour", "dist_fn",
    "from_points", "gradient", "hessian", "objective", "parse_regularizer", "quantile", "sample",
]
