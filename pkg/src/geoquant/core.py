"""The r-distribution function, the quantile objective and its derivatives.

All sums over atoms run in atom order through :func:`math.fsum`, so results
are correctly rounded sums of the per-atom terms and bit-stable across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonDifferentiableError
from .measure import DiscreteMeasure, atom_index
from .regularizer import Regularizer

SNAP_RADIUS = 1e-9


@dataclass(frozen=True)
class QuantileIndex:
    """A point alpha * u of the open unit ball."""

    alpha: float
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError(f"quantile order must lie in [0, 1), got {self.alpha}")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise DomainError("direction u must be a unit vector")

    @classmethod
    def from_vector(cls, v) -> "QuantileIndex":
        """Index for the ball point ``v``; the origin maps to direction e1."""
        v = np.asarray(v, dtype=float).reshape(-1)
        a = float(np.linalg.norm(v))
        if a == 0.0:
            e1 = np.zeros_like(v)
            e1[0] = 1.0
            return cls(0.0, e1)
        return cls(a, v / a)

    @classmethod
    def at_angle(cls, alpha: float, theta: float) -> "QuantileIndex":
        return cls(alpha, np.array([math.cos(theta), math.sin(theta)]))

    @property
    def vector(self) -> np.ndarray:
        return self.alpha * self.u


@dataclass(frozen=True)
class Certificate:
    """Directional first-order condition |F(x) - alpha u| <= r(0) P[{x}]."""

    residual: float
    atom_slack: float
    satisfied: bool
    tol: float
    nearest_atom: np.ndarray | None = None


def _fsum_rows(terms: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(col) for col in terms.T])


def _check_dim(m: DiscreteMeasure, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != m.dim:
        raise DomainError(f"point has dimension {x.shape[0]}, measure has {m.dim}")
    return x


def _offsets(m: DiscreteMeasure, x: np.ndarray):
    diff = x - m.atoms
    rho = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return diff, rho


def dist_fn(m: DiscreteMeasure, reg: Regularizer, x) -> np.ndarray:
    """F(x) = sum_i w_i r(|x - z_i|) (x - z_i) / |x - z_i| over atoms z_i != x."""
    x = _check_dim(m, x)
    diff, rho = _offsets(m, x)
    keep = rho > 0
    if not np.all(keep):
        diff, rho, w = diff[keep], rho[keep], m.weights[keep]
    else:
        w = m.weights
    if rho.size == 0:
        return np.zeros(m.dim)
    coef = w * reg.r(rho) / rho
    return _fsum_rows(diff * coef[:, None])


def dist_fn_at_atoms(m: DiscreteMeasure, reg: Regularizer) -> np.ndarray:
    """F evaluated at every atom (self term excluded); memoized on the measure."""
    key = ("F@atoms", reg)
    cached = m._cache.get(key)
    if cached is not None:
        return cached
    n = m.n_atoms
    if n <= 4000:
        out = np.array([dist_fn(m, reg, z) for z in m.atoms])
    else:
        out = np.empty_like(m.atoms)
        chunk = max(1, 2_000_000 // n)
        for lo in range(0, n, chunk):
            block = m.atoms[lo:lo + chunk]
            diff = block[:, None, :] - m.atoms[None, :, :]
            rho = np.sqrt((diff ** 2).sum(-1))
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(rho > 0, reg.r(rho) / rho, 0.0) * m.weights
            out[lo:lo + chunk] = np.einsum("kn,knd->kd", coef, diff)
    out.setflags(write=False)
    m._cache[key] = out
    return out


def _loss_at_atoms(m: DiscreteMeasure, reg: Regularizer) -> np.ndarray:
    key = ("R(z)", reg)
    cached = m._cache.get(key)
    if cached is None:
        cached = reg.primitive(np.sqrt(np.einsum("ij,ij->i", m.atoms, m.atoms)))
        m._cache[key] = cached
    return cached


def objective(m: DiscreteMeasure, reg: Regularizer, idx: QuantileIndex, x) -> float:
    """M(x) = sum_i w_i (R(z_i - x) - R(z_i)) - <alpha u, x>."""
    x = _check_dim(m, x)
    _, rho = _offsets(m, x)
    terms = m.weights * (reg.primitive(rho) - _loss_at_atoms(m, reg))
    return math.fsum(terms) - idx.alpha * float(idx.u @ x)


def directional_derivative(m, reg, idx: QuantileIndex, x, v) -> float:
    """One-sided derivative r(0)|v|P[{x}] + <v, F(x) - alpha u>."""
    x = _check_dim(m, x)
    v = np.asarray(v, dtype=float).reshape(-1)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise DomainError("direction of differentiation must be nonzero")
    i = atom_index(m, x)
    mass = 0.0 if i is None else float(m.weights[i])
    return reg.r0 * nv * mass + float(v @ (dist_fn(m, reg, x) - idx.vector))


def gradient(m, reg, idx: QuantileIndex, x) -> np.ndarray:
    """F(x) - alpha u; raises where the objective has a kink."""
    x = _check_dim(m, x)
    F = dist_fn(m, reg, x)
    i = atom_index(m, x)
    slack = 0.0 if i is None else reg.r0 * float(m.weights[i])
    if slack > 0:
        raise NonDifferentiableError("objective is not differentiable at an atom when r(0) > 0",
                                     dist=F, atom_slack=slack)
    return F - idx.vector


def _hessian_sum(m: DiscreteMeasure, reg: Regularizer, x: np.ndarray):
    diff, rho = _offsets(m, x)
    keep = rho > 0
    d = m.dim
    w, diff, rho = m.weights[keep], diff[keep], rho[keep]
    ros = reg.r(rho) / rho
    radial = w * (reg.rprime(rho) - ros)
    e = diff / rho[:, None]
    H = np.einsum("i,ij,ik->jk", radial, e, e) + math.fsum(w * ros) * np.eye(d)
    return 0.5 * (H + H.T), ~keep


def hessian(m, reg, idx: QuantileIndex, x) -> np.ndarray:
    """Sum of w_i * Hess R(x - z_i).

    At an atom the self term uses the continuous extension r'(0) I, which
    exists when r(0) = 0; with r(0) > 0 the curvature is undefined there.
    """
    x = _check_dim(m, x)
    H, at_atom = _hessian_sum(m, reg, x)
    if np.any(at_atom):
        if reg.r0 > 0:
            raise NonDifferentiableError("curvature is undefined at an atom when r(0) > 0",
                                         dist=dist_fn(m, reg, x),
                                         atom_slack=reg.r0 * float(m.weights[at_atom].sum()))
        H = H + float(m.weights[at_atom].sum()) * reg.rprime0 * np.eye(m.dim)
    return H


def default_tol(F: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(F)))


def nearest_atom(m: DiscreteMeasure, x, radius: float = SNAP_RADIUS):
    _, rho = _offsets(m, np.asarray(x, float))
    j = int(np.argmin(rho))
    return (m.atoms[j].copy(), j) if rho[j] <= radius else (None, None)


def certify_quantile(m, reg, idx: QuantileIndex, x, tol: float | None = None) -> Certificate:
    """Check the directional first-order condition at ``x``."""
    x = _check_dim(m, x)
    F = dist_fn(m, reg, x)
    residual = float(np.linalg.norm(F - idx.vector))
    i = atom_index(m, x)
    slack = 0.0 if i is None else reg.r0 * float(m.weights[i])
    if tol is None:
        tol = default_tol(F)
    if tol < 0:
        raise DomainError("certificate tolerance must be >= 0")
    near, _ = nearest_atom(m, x)
    return Certificate(residual, slack, residual <= slack + tol, tol, near)
