"""Extreme-quantile diagnostics: norm growth, direction gaps and their limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import QuantileIndex
from .errors import DomainError, PreconditionError
from .measure import DiscreteMeasure
from .regularizer import Regularizer, tail_limit
from .solver import SolverOptions, Status, quantile


@dataclass(frozen=True)
class ExtremeRow:
    alpha: float
    norm: float
    scaled_norm: float        # |q|^beta (1 - alpha)
    direction_gap: np.ndarray  # |q|^min(beta, 1) (q/|q| - alpha u)
    gap_to_u: np.ndarray       # |q| (q/|q| - u)
    point: np.ndarray
    status: Status


@dataclass(frozen=True)
class ExtremeCurve:
    rows: list
    beta: float
    u: np.ndarray

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.rows])

    @property
    def norms(self) -> np.ndarray:
        return np.array([r.norm for r in self.rows])

    @property
    def scaled_norms(self) -> np.ndarray:
        return np.array([r.scaled_norm for r in self.rows])


def curve_beta(reg: Regularizer) -> float:
    """Exponent at which the norm growth is tabulated: the tail exponent capped at 2."""
    b = reg.tail_beta
    return 2.0 if b is None else min(float(b), 2.0)


def _tail(reg: Regularizer, beta: float, allow_estimate: bool) -> float:
    lim = tail_limit(reg, beta)
    if lim.estimate and not allow_estimate:
        raise PreconditionError(
            f"tail limit of {reg.name} at beta={beta} is only a numerical estimate; "
            "pass allow_estimate=True to use it")
    return lim.value


def extreme_curve(m: DiscreteMeasure, reg: Regularizer, u, alphas, opts: SolverOptions | None = None,
                  beta: float | None = None, allow_estimate: bool = False) -> ExtremeCurve:
    """Solve quantiles along increasing ``alphas`` (warm-started) and tabulate growth."""
    u = np.asarray(u, dtype=float).reshape(-1)
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise DomainError("alpha grid is empty")
    if any(not 0.5 <= a < 1.0 for a in alphas):
        raise DomainError("extreme alphas must lie in [0.5, 1)")
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise DomainError("alphas must be strictly increasing")
    beta = curve_beta(reg) if beta is None else float(beta)
    if math.isinf(_tail(reg, beta, allow_estimate)):
        raise DomainError(f"tail limit at beta={beta} is infinite; use a smaller beta")
    opts = opts or SolverOptions()
    rows, start = [], opts.start
    for a in alphas:
        idx = QuantileIndex(a, u)
        sol = quantile(m, reg, idx, replace(opts, start=start))
        start = sol.point
        q = sol.point
        nq = float(np.linalg.norm(q))
        unit = q / nq if nq > 0 else np.zeros_like(q)
        rows.append(ExtremeRow(
            alpha=a, norm=nq, scaled_norm=nq ** beta * (1.0 - a),
            direction_gap=nq ** min(beta, 1.0) * (unit - a * idx.u),
            gap_to_u=nq * (unit - idx.u), point=q, status=sol.status))
    return ExtremeCurve(rows, beta, u / np.linalg.norm(u))


def predicted_norm_limit(m: DiscreteMeasure, reg: Regularizer, u, beta: float,
                         allow_estimate: bool = False) -> float:
    """Limit of |q|^beta (1 - alpha) as alpha -> 1 in direction u.

    For beta < 2 this is the tail index l(beta); for beta = 2 the covariance
    term (Tr S - u'Su)/2 is added.
    """
    beta = float(beta)
    if not 0.0 < beta <= 2.0:
        raise DomainError("beta must lie in (0, 2]")
    ell = _tail(reg, beta, allow_estimate)
    if math.isinf(ell):
        raise DomainError(f"tail limit at beta={beta} is infinite; use a smaller beta")
    if beta < 2.0:
        return ell
    u = np.asarray(u, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    S = m.covariance()
    return ell + 0.5 * (float(np.trace(S)) - float(u @ S @ u))


def _transverse_mean(m: DiscreteMeasure, u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    mu = m.mean()
    return mu - float(mu @ u) * u


def direction_gap_limit(m: DiscreteMeasure, reg: Regularizer, u,
                        allow_estimate: bool = False) -> np.ndarray:
    """E[Z - <Z,u>u], the limit of |q| (q/|q| - u); needs l(1) finite."""
    if math.isinf(_tail(reg, 1.0, allow_estimate)):
        raise DomainError("l(1) is infinite: the direction gap has no finite limit")
    return _transverse_mean(m, u)


def alpha_gap_limit(m: DiscreteMeasure, reg: Regularizer, u, beta: float,
                    allow_estimate: bool = False) -> np.ndarray:
    """Limit of the tabulated ``direction_gap`` |q|^min(beta,1) (q/|q| - alpha u).

    It is l(beta) u for beta < 1 and l(1) u + E[Z - <Z,u>u] for beta >= 1.
    """
    beta = float(beta)
    u = np.asarray(u, dtype=float).reshape(-1)
    u = u / np.linalg.norm(u)
    ell = _tail(reg, min(beta, 1.0), allow_estimate)
    if math.isinf(ell):
        raise DomainError(f"tail limit at beta={min(beta, 1.0)} is infinite")
    if beta < 1.0:
        return ell * u
    return ell * u + _transverse_mean(m, u)
