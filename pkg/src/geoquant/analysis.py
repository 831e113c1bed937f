"""Black-hole decomposition of the unit ball and related diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import QuantileIndex, dist_fn_at_atoms
from .errors import DomainError, UniquenessError
from .measure import DiscreteMeasure, is_line_supported, transform
from .regularizer import Regularizer
from .solver import SolverOptions, quantile

STRICT_SLACK = 1e-12


class BoundaryWarning(UserWarning):
    """A strict inequality holds only up to rounding (exact-boundary case)."""


class GeneralizedFormulaWarning(UserWarning):
    """The volume fraction was computed with the non-uniform generalization."""


@dataclass(frozen=True)
class BlackHole:
    """Closed ball of indices alpha*u whose quantile is ``atom``."""

    atom: np.ndarray
    center: np.ndarray
    radius: float

    def contains(self, v) -> bool:
        return float(np.linalg.norm(np.asarray(v, float) - self.center)) <= self.radius

    def to_json(self) -> dict:
        return {"atom": self.atom.tolist(), "center": self.center.tolist(), "radius": self.radius}


def _require_uniqueness(m: DiscreteMeasure, reg: Regularizer) -> None:
    if not reg.strictly_increasing and is_line_supported(m) is not None:
        raise UniquenessError(
            "quantiles need not be unique: the data lie on a line and the regularizer "
            "is not strictly increasing")


def black_holes(m: DiscreteMeasure, reg: Regularizer) -> list[BlackHole]:
    """One ball per atom: centre F(atom) (self term excluded), radius r(0) P[{atom}]."""
    _require_uniqueness(m, reg)
    if reg.r0 == 0.0:
        return []
    F = dist_fn_at_atoms(m, reg)
    return [BlackHole(m.atoms[i].copy(), F[i].copy(), float(reg.r0 * m.weights[i]))
            for i in range(m.n_atoms)]


@dataclass(frozen=True)
class RankSpacing:
    min_gap: float
    bound: float
    passed: bool
    boundary: bool = False

    def __iter__(self):
        return iter((self.min_gap, self.bound, self.passed))


def rank_spacing(m: DiscreteMeasure, reg: Regularizer) -> RankSpacing:
    """Smallest distance between atom ranks F(x_i) versus r(0)(P{x_i} + P{x_j}).

    Outside the uniqueness regime a warning is issued rather than an error,
    since the distances themselves remain well defined.
    """
    try:
        _require_uniqueness(m, reg)
    except UniquenessError as exc:
        warnings.warn(str(exc), UserWarning, stacklevel=2)
    if m.n_atoms < 2:
        return RankSpacing(np.inf, 0.0, True)
    F = dist_fn_at_atoms(m, reg)
    i, j = np.triu_indices(m.n_atoms, k=1)
    gaps = np.linalg.norm(F[i] - F[j], axis=1)
    pair_bound = reg.r0 * (m.weights[i] + m.weights[j])
    slack = gaps - pair_bound
    k = int(np.argmin(slack))
    min_gap, bound = float(gaps.min()), float(pair_bound.min())
    passed = bool(slack[k] > STRICT_SLACK)
    boundary = bool(abs(slack[k]) <= STRICT_SLACK)
    if boundary:
        warnings.warn("rank gap equals the black-hole bound up to rounding", BoundaryWarning,
                      stacklevel=2)
    return RankSpacing(min_gap, bound, passed, boundary)


def volume_fraction(m: DiscreteMeasure, reg: Regularizer) -> float:
    """Lebesgue fraction of the unit ball left outside the black holes.

    With uniform weights this is ``1 - r(0)^d / n^(d-1)``. Otherwise the ball
    volumes ``(r(0) w_i)^d`` are summed and a warning flags the generalization.
    """
    d = m.dim
    if reg.r0 == 0.0:
        return 1.0
    if m.is_uniform():
        return 1.0 - reg.r0 ** d / m.n_atoms ** (d - 1)
    warnings.warn("non-uniform weights: summing individual ball volumes",
                  GeneralizedFormulaWarning, stacklevel=2)
    return 1.0 - float(np.sum((reg.r0 * m.weights) ** d))


def equivariance_residual(m: DiscreteMeasure, reg: Regularizer, idx: QuantileIndex, O, b,
                          opts: SolverOptions | None = None) -> float:
    """|Q_{OP+b}(alpha, Ou) - (O Q_P(alpha, u) + b)| with both sides solved independently."""
    O = np.asarray(O, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if O.shape != (m.dim, m.dim) or b.shape != (m.dim,):
        raise DomainError("O must be d x d and b a d-vector")
    moved = transform(m, O, b)
    u2 = O @ idx.u
    u2 = u2 / np.linalg.norm(u2)
    lhs = quantile(moved, reg, QuantileIndex(idx.alpha, u2), opts).point
    rhs = O @ quantile(m, reg, idx, opts).point + b
    return float(np.linalg.norm(lhs - rhs))
