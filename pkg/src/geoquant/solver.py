"""Computing r-quantiles: atom screening, damped Newton, contours and oracles."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import core
from .core import QuantileIndex, certify_quantile, dist_fn, dist_fn_at_atoms
from .errors import DomainError, GeoquantError, PreconditionError
from .measure import DiscreteMeasure, atom_index, is_line_supported
from .regularizer import Regularizer

_EPS = np.finfo(float).eps


class Status(str, Enum):
    CONVERGED = "converged"
    AT_ATOM = "at_atom"
    DEGENERATE_LINE = "degenerate_line"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 1e-10
    max_iter: int = 200
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    hessian_ridge: float = 1e-12
    start: np.ndarray | None = None  # None -> componentwise weighted median
    keep_trace: bool = False
    screen_limit: int = 5000  # above this many atoms, screen only atoms the iterates approach

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise DomainError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise DomainError("armijo_c must lie in (0, 1)")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class LineReduction:
    """One-dimensional reduction used when the data sit on a line parallel to u."""

    base: np.ndarray
    direction: np.ndarray
    position: float


@dataclass
class QuantileSolution:
    point: np.ndarray
    certificate: core.Certificate
    status: Status
    iterations: int
    trace: list | None = None
    line: LineReduction | None = field(default=None, repr=False)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, 0.5 * cum[-1]))
    if math.isclose(cum[k], 0.5 * cum[-1], rel_tol=0, abs_tol=1e-14) and k + 1 < len(v):
        return 0.5 * (v[k] + v[k + 1])
    return float(v[k])


def componentwise_median(m: DiscreteMeasure) -> np.ndarray:
    return np.array([weighted_median(m.atoms[:, j], m.weights) for j in range(m.dim)])


def _line_of(m: DiscreteMeasure):
    if "line" not in m._cache:
        m._cache["line"] = is_line_supported(m)
    return m._cache["line"]


def _screen_atoms(m, reg, idx):
    """First atom (in input order) whose black hole contains alpha * u."""
    F_at = dist_fn_at_atoms(m, reg)
    res = np.linalg.norm(F_at - idx.vector, axis=1)
    slack = reg.r0 * m.weights
    loose = slack + 1e-6 * (1.0 + np.linalg.norm(F_at, axis=1))
    for j in np.flatnonzero(res <= loose):
        cert = certify_quantile(m, reg, idx, m.atoms[j])
        if cert.satisfied:
            return m.atoms[j].copy(), cert
    return None


def _objective_with_scale(m, reg, idx, x, loss_z):
    diff = x - m.atoms
    rho = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    Rx = reg.primitive(rho)
    lin = idx.alpha * float(idx.u @ x)
    val = math.fsum(m.weights * (Rx - loss_z)) - lin
    scale = float(m.weights @ (Rx + loss_z)) + abs(lin)
    return val, scale


def _extent(m: DiscreteMeasure) -> float:
    """Bounding-box diagonal of the atoms, or 1 for a single atom."""
    if "extent" not in m._cache:
        ext = float(np.linalg.norm(np.ptp(m.atoms, axis=0)))
        m._cache["extent"] = ext if ext > 0 else max(1.0, float(np.abs(m.atoms).max()))
    return m._cache["extent"]


def _newton(m, reg, idx, x, opts, trace):
    d = m.dim
    r0 = reg.r0
    loss_z = core._loss_at_atoms(m, reg)
    c, shrink = opts.armijo_c, opts.backtrack_factor
    # step-length cap: guards against near-singular Hessians (r'(0) = 0, flat tails)
    cap = 10.0 * max(_extent(m), 1e-300)
    it = 0
    while True:
        F = dist_fn(m, reg, x)
        g = F - idx.vector
        gnorm = float(np.linalg.norm(g))
        M, scale = _objective_with_scale(m, reg, idx, x, loss_z)
        if trace is not None:
            trace.append((x.copy(), M, gnorm))
        if gnorm <= opts.grad_tol * (1.0 + float(np.linalg.norm(F))):
            return x, it, None
        if it >= opts.max_iter:
            return x, it, None
        it += 1
        H, at_atom = core._hessian_sum(m, reg, x)
        if np.any(at_atom):
            H = H + float(m.weights[at_atom].sum()) * reg.rprime0 * np.eye(d)
        ridge = opts.hessian_ridge * max(np.trace(H), _EPS) / d
        try:
            p = np.linalg.solve(H + ridge * np.eye(d), -g)
        except np.linalg.LinAlgError:
            p = -g
        if not np.all(np.isfinite(p)) or float(g @ p) >= 0:
            p = -g
        pn = float(np.linalg.norm(p))
        capped = pn > cap
        if capped:
            p = p * (cap / pn)
        slope = float(g @ p)
        noise = 64.0 * _EPS * scale
        t = 1.0
        accepted = None
        for _ in range(80):
            cand = x + t * p
            Mc, _ = _objective_with_scale(m, reg, idx, cand, loss_z)
            if Mc <= M + c * t * slope:
                accepted = cand
                break
            if Mc <= M + noise:
                # objective differences are at rounding level: fall back on the residual
                gc = np.linalg.norm(dist_fn(m, reg, cand) - idx.vector)
                if gc < gnorm:
                    accepted = cand
                    break
            t *= shrink
        if capped and t == 1.0:
            cap *= 4.0
        if accepted is None:
            return x, it, None
        if np.array_equal(accepted, x):
            return x, it, None
        x = accepted
        if r0 > 0:
            _, rho = core._offsets(m, x)
            j = int(np.argmin(rho))
            if rho[j] <= 1e-7 * (1.0 + float(np.linalg.norm(x))):
                z = m.atoms[j]
                cert = certify_quantile(m, reg, idx, z)
                if cert.satisfied:
                    return z.copy(), it, cert
                x = _escape_atom(m, reg, idx, j, loss_z, c)


def _escape_atom(m, reg, idx, j, loss_z, c):
    """Leave atom j along its steepest-descent direction -(F(z) - alpha u).

    Iterates that drift into the kink at an atom otherwise stall: near the
    apex the tangential curvature blows up and Newton keeps aiming through it.
    """
    z = m.atoms[j]
    g0 = dist_fn(m, reg, z) - idx.vector
    gn = float(np.linalg.norm(g0))
    v = -g0 / gn
    slope = reg.r0 * float(m.weights[j]) - gn
    M0, _ = _objective_with_scale(m, reg, idx, z, loss_z)
    if m.n_atoms > 1:
        _, rho = core._offsets(m, z)
        t = 0.5 * float(np.min(rho[rho > 0]))
    else:
        t = 1.0
    for _ in range(80):
        cand = z + t * v
        Mc, _ = _objective_with_scale(m, reg, idx, cand, loss_z)
        if Mc <= M0 + c * t * slope:
            return cand
        t *= 0.5
    return z + t * v


def _solve_on_line(m, reg, idx, base, direction):
    """Minimize along the support line: bisection on the monotone 1-D F."""
    t = (m.atoms - base) @ direction
    w = m.weights
    a = idx.alpha * float(idx.u @ direction)
    r0 = reg.r0

    def F1(lam):
        s = lam - t
        nz = s != 0
        return math.fsum(w[nz] * reg.r(np.abs(s[nz])) * np.sign(s[nz])), float(w[~nz].sum())

    def side(lam):
        f, mass = F1(lam)
        if f - r0 * mass > a:
            return 1
        if f + r0 * mass < a:
            return -1
        return 0

    span = max(float(t.max() - t.min()), 1.0)
    lo, hi = float(t.min()) - span, float(t.max()) + span
    for _ in range(2000):
        if side(lo) < 0:
            break
        if side(lo) == 0:
            return lo
        lo -= span
        span *= 2
    span = max(float(t.max() - t.min()), 1.0)
    for _ in range(2000):
        if side(hi) > 0:
            break
        if side(hi) == 0:
            return hi
        hi += span
        span *= 2
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = side(mid)
        if s == 0:
            return mid
        if s > 0:
            hi = mid
        else:
            lo = mid
    inside = np.flatnonzero((t >= lo) & (t <= hi))
    for j in inside:
        if side(t[j]) == 0:
            return ("atom", int(j))
    return 0.5 * (lo + hi)


def quantile(m: DiscreteMeasure, reg: Regularizer, idx: QuantileIndex,
             opts: SolverOptions | None = None) -> QuantileSolution:
    """The r-quantile of order ``idx.alpha`` in direction ``idx.u``.

    Atoms are screened first when r(0) > 0 (an atom is a quantile exactly
    when alpha * u lies in its black hole); otherwise the smooth objective is
    minimized by damped Newton from the componentwise median. Line-supported
    data with u along the line and a regularizer that is not strictly
    increasing are reduced to a one-dimensional problem and flagged
    :attr:`Status.DEGENERATE_LINE` since the minimizer may not be unique.
    """
    opts = opts or SolverOptions()
    if idx.u.shape[0] != m.dim:
        raise DomainError("direction dimension does not match the measure")
    if not idx.alpha < 1.0:
        raise DomainError("no quantile of order 1 is computed")
    trace = [] if opts.keep_trace else None

    if reg.r0 > 0 and m.n_atoms <= opts.screen_limit:
        hit = _screen_atoms(m, reg, idx)
        if hit is not None:
            point, cert = hit
            return QuantileSolution(point, cert, Status.AT_ATOM, 0, trace)

    line = _line_of(m)
    if line is not None and not reg.strictly_increasing:
        base, direction = line
        if idx.alpha == 0.0 or abs(abs(float(idx.u @ direction)) - 1.0) <= 1e-12:
            res = _solve_on_line(m, reg, idx, base, direction)
            if isinstance(res, tuple):
                point = m.atoms[res[1]].copy()
                pos = float((point - base) @ direction)
            else:
                pos = float(res)
                point = base + pos * direction
                j = atom_index(m, point)
                if j is not None:
                    point = m.atoms[j].copy()
            cert = certify_quantile(m, reg, idx, point)
            return QuantileSolution(point, cert, Status.DEGENERATE_LINE, 0, trace,
                                    LineReduction(base, direction, pos))

    x = componentwise_median(m) if opts.start is None else np.asarray(opts.start, float).copy()
    if x.shape != (m.dim,):
        raise DomainError("start point has the wrong dimension")
    if reg.r0 > 0 and atom_index(m, x) is not None:
        cert = certify_quantile(m, reg, idx, x)
        if cert.satisfied:
            return QuantileSolution(x, cert, Status.AT_ATOM, 0, trace)
        x = x + 1e-8 * (1.0 + np.linalg.norm(x)) * np.eye(m.dim)[0]

    x, iters, atom_cert = _newton(m, reg, idx, x, opts, trace)
    if atom_cert is not None:
        return QuantileSolution(x, atom_cert, Status.AT_ATOM, iters, trace)
    cert = certify_quantile(m, reg, idx, x)
    if cert.satisfied:
        status = Status.AT_ATOM if cert.atom_slack > 0 else Status.CONVERGED
    else:
        status = Status.MAX_ITERATIONS
    return QuantileSolution(x, cert, status, iters, trace)


def brute_force_quantile(m: DiscreteMeasure, reg: Regularizer, idx: QuantileIndex,
                         bounds, resolution: int) -> np.ndarray:
    """Grid argmin of the objective over a box; a test oracle only."""
    if m.dim > 3:
        raise DomainError("brute force is limited to d <= 3")
    if resolution < 11:
        raise DomainError("resolution must be at least 11 per axis")
    bounds = np.asarray(bounds, dtype=float).reshape(m.dim, 2)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    loss_z = core._loss_at_atoms(m, reg)
    best_val, best_pt = math.inf, None
    chunk = max(1, 4_000_000 // m.n_atoms)
    for lo in range(0, grid.shape[0], chunk):
        G = grid[lo:lo + chunk]
        rho = np.sqrt(((G[:, None, :] - m.atoms[None, :, :]) ** 2).sum(-1))
        vals = (reg.primitive(rho) - loss_z) @ m.weights - idx.alpha * (G @ idx.u)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_pt = float(vals[k]), G[k].copy()
    return best_pt


def angular_directions(n_dirs: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    return np.column_stack([np.cos(theta), np.sin(theta)])


def contour(m: DiscreteMeasure, reg: Regularizer, alpha: float, n_dirs: int | None = None,
            opts: SolverOptions | None = None, directions=None, threads: int = 1):
    """Quantiles of one order over a set of directions.

    Returns a list of ``(u, result)`` where ``result`` is a
    :class:`QuantileSolution` or the exception raised for that direction.
    Directions are solved in consecutive arcs (one per thread), each solve
    warm-started from the previous direction of its arc.
    """
    opts = opts or SolverOptions()
    if directions is None:
        if m.dim != 2:
            raise DomainError("angular grids need d = 2; pass directions explicitly")
        if n_dirs is None or n_dirs < 1:
            raise DomainError("n_dirs must be a positive count")
        dirs = angular_directions(n_dirs)
    else:
        dirs = np.asarray(directions, dtype=float)
    threads = max(1, min(int(threads), len(dirs)))
    bounds = np.linspace(0, len(dirs), threads + 1).astype(int)

    def run_arc(lo, hi):
        out, start = [], opts.start
        for u in dirs[lo:hi]:
            try:
                sol = quantile(m, reg, QuantileIndex(alpha, u), replace(opts, start=start))
                start = sol.point
                out.append((u, sol))
            except GeoquantError as exc:
                out.append((u, exc))
        return out

    if threads == 1:
        return run_arc(0, len(dirs))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda k: run_arc(bounds[k], bounds[k + 1]), range(threads)))
    return [row for part in parts for row in part]


def inverse_roundtrip(m: DiscreteMeasure, reg: Regularizer, x, opts: SolverOptions | None = None) -> float:
    """|Q(F(x)) - x|, which vanishes where the quantile map inverts F."""
    x = np.asarray(x, dtype=float)
    if reg.r0 > 0 and atom_index(m, x) is not None:
        raise PreconditionError("F is not inverted at atoms when r(0) > 0")
    F = dist_fn(m, reg, x)
    if not np.linalg.norm(F) < 1.0:
        raise PreconditionError("F(x) is not inside the open unit ball")
    sol = quantile(m, reg, QuantileIndex.from_vector(F), opts)
    return float(np.linalg.norm(sol.point - x))


def check_spherical(m: DiscreteMeasure, tol: float = 1e-9) -> None:
    """Invariance under x -> -x and under each coordinate reflection fixing e1."""
    from scipy.spatial import cKDTree

    tree = cKDTree(m.atoms)
    maps = [-np.eye(m.dim)]
    for j in range(1, m.dim):
        refl = np.eye(m.dim)
        refl[j, j] = -1.0
        maps.append(refl)
    for T in maps:
        image = m.atoms @ T.T
        dist, nn = tree.query(image)
        if np.any(dist > tol) or np.any(np.abs(m.weights[nn] - m.weights) > tol):
            raise PreconditionError("measure is not symmetric enough for the radial profile")


def radial_profile(m: DiscreteMeasure, reg: Regularizer, alpha: float, tol: float = 1e-12) -> float:
    """Radius Q(alpha) of the spherical contour of a symmetric measure.

    Solves phi(lam) = alpha by bisection, where phi(lam) is the first
    coordinate of F at lam * e1.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError("alpha must lie in [0, 1)")
    check_spherical(m)
    origin = np.zeros(m.dim)
    j = atom_index(m, origin)
    p0 = 0.0 if j is None else float(m.weights[j])
    if alpha <= reg.r0 * p0:
        return 0.0
    e1 = np.zeros(m.dim)
    e1[0] = 1.0

    def phi(lam):
        return float(dist_fn(m, reg, lam * e1)[0])

    hi = 1.0
    while phi(hi) <= alpha:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("radial profile bracket diverged")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) > alpha:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
