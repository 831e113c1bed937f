"""Sandwich covariance at a quantile and Monte Carlo checks of the limit theory."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from . import core
from .core import QuantileIndex, certify_quantile
from .errors import ConditioningError, DomainError, GeoquantError, HypothesisError
from .measure import DiscreteMeasure, Generator, atom_index, is_line_supported, sample
from .regularizer import Regularizer, l1_distance
from .solver import SolverOptions, Status, quantile

ORACLE_N = 1_000_000
ORACLE_SEED = 20_231_117
MAX_CONDITION = 1e12
MAX_FAILURE_RATE = 0.01
RPRIME_GRID = np.logspace(-6, 3, 2000)
MAHALANOBIS_PROBS = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


@dataclass(frozen=True)
class SandwichEstimate:
    A: np.ndarray
    B: np.ndarray
    Sigma: np.ndarray
    q: np.ndarray


def check_normality_hypotheses(m: DiscreteMeasure, reg: Regularizer, q) -> None:
    """Raise :class:`HypothesisError` unless (i or ii) and (iii or iv) hold."""
    rprime_pos = bool(np.all(reg.rprime(RPRIME_GRID) > 0))
    cond_i = rprime_pos and m.n_atoms > 1
    cond_ii = is_line_supported(m) is None
    if not (cond_i or cond_ii):
        raise HypothesisError(
            "normality conditions (i) and (ii) both fail: r' is not positive on (0, inf) "
            "or P is a point mass, and P is supported on a line")
    cond_iii = reg.r0 == 0.0 and reg.rprime0 == 0.0
    cond_iv = atom_index(m, q) is None
    if not (cond_iii or cond_iv):
        raise HypothesisError(
            "normality conditions (iii) and (iv) both fail: r(0) = r'(0) = 0 does not hold "
            "and the quantile is an atom")


def sandwich(m: DiscreteMeasure, reg: Regularizer, idx: QuantileIndex, q,
             check_quantile: bool = True) -> SandwichEstimate:
    """A^-1 B A^-1 with A the mean Hessian of R(z - q) and B the score second moment.

    Atoms equal to ``q`` are left out of both sums.
    """
    q = core._check_dim(m, q)
    check_normality_hypotheses(m, reg, q)
    if check_quantile and not certify_quantile(m, reg, idx, q).satisfied:
        raise DomainError("q does not satisfy the first-order condition for this index")
    A, _ = core._hessian_sum(m, reg, q)
    diff, rho = core._offsets(m, q)
    keep = rho > 0
    w, diff, rho = m.weights[keep], diff[keep], rho[keep]
    score = diff * (reg.r(rho) / rho)[:, None] - idx.vector
    B = np.einsum("i,ij,ik->jk", w, score, score)
    B = 0.5 * (B + B.T)
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        cond = math.inf
    if not cond <= MAX_CONDITION:
        raise ConditioningError(f"A is numerically singular (condition number {cond:.3g})")
    try:
        factor = linalg.cho_factor(A)
    except linalg.LinAlgError:
        raise ConditioningError("A is not positive definite") from None
    AinvB = linalg.cho_solve(factor, B)
    Sigma = linalg.cho_solve(factor, AinvB.T)
    return SandwichEstimate(A, B, 0.5 * (Sigma + Sigma.T), q.copy())


@dataclass(frozen=True)
class Oracle:
    q0: np.ndarray
    Sigma0: np.ndarray


_ORACLES: dict = {}


def population_oracle(g: Generator, reg: Regularizer, idx: QuantileIndex,
                      oracle_n: int = ORACLE_N, oracle_seed: int = ORACLE_SEED,
                      opts: SolverOptions | None = None) -> Oracle:
    """Quantile and sandwich covariance of one giant sample, used as population truth."""
    key = (g, reg, idx.alpha, tuple(idx.u), oracle_n, oracle_seed)
    hit = _ORACLES.get(key)
    if hit is not None:
        return hit
    big = sample(g, oracle_n, oracle_seed)
    sol = quantile(big, reg, idx, opts)
    if not sol.certificate.satisfied:
        raise GeoquantError(f"oracle solve failed ({sol.status.value})")
    est = sandwich(big, reg, idx, sol.point)
    out = Oracle(sol.point, est.Sigma)
    _ORACLES[key] = out
    return out


def _replicates(g, reg, idx, n, reps, seed, opts, threads):
    """Solve ``reps`` independent n-samples; returns (estimates, failure count)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(reps)

    def one(child):
        try:
            m = sample(g, n, np.random.default_rng(child))
            sol = quantile(m, reg, idx, opts)
        except GeoquantError:
            return None
        return sol.point if sol.status is not Status.MAX_ITERATIONS else None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, children))
    else:
        results = [one(c) for c in children]
    ok = [r for r in results if r is not None]
    return np.array(ok).reshape(len(ok), -1), len(results) - len(ok)


@dataclass(frozen=True)
class CltReport:
    n: int
    reps: int
    coverage95: float
    mahalanobis_quantiles: dict  # prob -> (empirical, chi2 reference)
    oracle_q0: np.ndarray
    Sigma0: np.ndarray
    empirical_cov: np.ndarray
    cov_rel_error: float  # operator-norm distance to Sigma0, relative
    failures: int
    valid: bool

    def to_json(self) -> dict:
        return {
            "n": self.n, "reps": self.reps, "coverage95": self.coverage95,
            "mahalanobis_quantiles": {str(p): list(v) for p, v in self.mahalanobis_quantiles.items()},
            "oracle_q0": self.oracle_q0.tolist(), "Sigma0": self.Sigma0.tolist(),
            "empirical_cov": self.empirical_cov.tolist(), "cov_rel_error": self.cov_rel_error,
            "failures": self.failures, "valid": self.valid,
        }


def clt_experiment(g: Generator, reg: Regularizer, idx: QuantileIndex, n: int, reps: int,
                   seed: int, opts: SolverOptions | None = None, oracle_n: int = ORACLE_N,
                   oracle_seed: int = ORACLE_SEED, threads: int = 1) -> CltReport:
    """Coverage of the 95% sandwich ellipsoid by sqrt(n)(q_hat - q0) over replicates."""
    if reps < 100:
        raise DomainError("reps must be >= 100")
    if n < 2:
        raise DomainError("n must be >= 2")
    orc = population_oracle(g, reg, idx, oracle_n, oracle_seed, opts)
    est, failures = _replicates(g, reg, idx, n, reps, seed, opts, threads)
    d = orc.q0.shape[0]
    z = math.sqrt(n) * (est - orc.q0)
    stat = np.einsum("ij,ij->i", z, linalg.solve(orc.Sigma0, z.T, assume_a="pos").T)
    crit = stats.chi2.ppf(0.95, d)
    emp_q = np.quantile(stat, MAHALANOBIS_PROBS)
    ref_q = stats.chi2.ppf(MAHALANOBIS_PROBS, d)
    emp_cov = z.T @ z / z.shape[0]
    rel = float(np.linalg.norm(emp_cov - orc.Sigma0, 2) / np.linalg.norm(orc.Sigma0, 2))
    return CltReport(
        n=n, reps=reps, coverage95=float(np.mean(stat <= crit)),
        mahalanobis_quantiles={p: (float(e), float(r)) for p, e, r in zip(MAHALANOBIS_PROBS, emp_q, ref_q)},
        oracle_q0=orc.q0, Sigma0=orc.Sigma0, empirical_cov=emp_cov, cov_rel_error=rel,
        failures=failures, valid=failures <= MAX_FAILURE_RATE * reps)


@dataclass(frozen=True)
class ConsistencyCurve:
    points: list  # of (n, mean_error)
    slope: float
    failures: int
    valid: bool
    oracle_q0: np.ndarray = field(repr=False, default=None)


def consistency_curve(g: Generator, reg: Regularizer, idx: QuantileIndex, n_grid, reps: int,
                      seed: int, opts: SolverOptions | None = None, oracle_n: int = ORACLE_N,
                      oracle_seed: int = ORACLE_SEED, threads: int = 1) -> ConsistencyCurve:
    """Mean |q_hat_n - q0| per n and the log-log slope of that curve."""
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 2:
        raise DomainError("need at least two sample sizes")
    orc = population_oracle(g, reg, idx, oracle_n, oracle_seed, opts)
    seeds = np.random.SeedSequence(seed).spawn(len(n_grid))
    points, failures = [], 0
    for n, ss in zip(n_grid, seeds):
        est, fails = _replicates(g, reg, idx, n, reps, ss, opts, threads)
        failures += fails
        points.append((n, float(np.mean(np.linalg.norm(est - orc.q0, axis=1)))))
    slope = float(np.polyfit(np.log([p[0] for p in points]), np.log([p[1] for p in points]), 1)[0])
    return ConsistencyCurve(points, slope, failures,
                            failures <= MAX_FAILURE_RATE * reps * len(n_grid), orc.q0)


@dataclass(frozen=True)
class StabilityGap:
    sq_dist: float
    l1: float
    ratio: float
    flag: str = ""  # "undefined" when l1 = 0, "infinite-l1" when l1 = inf

    def __iter__(self):
        return iter((self.sq_dist, self.l1, self.ratio))


def stability_gap(m: DiscreteMeasure, reg1: Regularizer, reg2: Regularizer, idx: QuantileIndex,
                  opts: SolverOptions | None = None) -> StabilityGap:
    """Squared distance between the two quantiles against the L1 gap of the regularizers."""
    if not (reg1.strictly_increasing and reg1.r0 == 0.0):
        raise HypothesisError("stability bound needs reg1 strictly increasing with r(0) = 0")
    q1 = quantile(m, reg1, idx, opts).point
    q2 = quantile(m, reg2, idx, opts).point
    sq = float(np.sum((q1 - q2) ** 2))
    l1 = l1_distance(reg1, reg2)
    if math.isinf(l1):
        return StabilityGap(sq, l1, 0.0, "infinite-l1")
    if l1 == 0.0:
        return StabilityGap(sq, 0.0, math.nan, "undefined")
    return StabilityGap(sq, l1, sq / l1)
