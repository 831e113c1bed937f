"""Regularizers ``r`` and the induced convex loss ``R(x) = int_0^|x| r(s) ds``.

Three closed-form families are built in:

* ``geometric``      r(s) = 1 (classical geometric quantiles)
* ``power:<beta>``   r(s) = 1 - (1 + s)^(-beta)
* ``smoothstep:<tau>`` r(s) = 3t^2 - 2t^3 with t = min(s / tau, 1)

Arbitrary regularizers can be supplied with :meth:`Regularizer.custom`; their
primitive is then obtained by adaptive quadrature.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .errors import DomainError, SingularityError, SpecParseError

GEOMETRIC = "geometric"
POWER = "power"
SMOOTHSTEP = "smoothstep"
CUSTOM = "custom"

VALID_SPECS = "geometric | power:<beta> | smoothstep:<tau>"

# sampling grid for class membership checks
MEMBERSHIP_GRID = np.logspace(-8, 8, 10_000)

# below this value of (beta + 1) * t the power primitive is summed as a series
_SERIES_CUTOFF = 0.05


class TailLimit(NamedTuple):
    """Value of lim s^beta (1 - r(s)); ``estimate`` marks a numeric guess."""

    value: float
    estimate: bool = False


@dataclass(frozen=True, eq=False)
class Regularizer:
    """A member of the regularizer class: ``r : [0, inf) -> [0, 1]``.

    Instances are immutable. Use the constructors :meth:`geometric`,
    :meth:`power`, :meth:`smoothstep`, :meth:`custom` or :func:`parse_regularizer`.
    """

    kind: str
    param: float | None = None
    _r: Callable | None = field(default=None, repr=False)
    _rprime: Callable | None = field(default=None, repr=False)
    _primitive: Callable | None = field(default=None, repr=False)
    label: str | None = field(default=None, repr=False)

    # -- constructors -------------------------------------------------------
    @classmethod
    def geometric(cls) -> "Regularizer":
        return cls(GEOMETRIC)

    @classmethod
    def power(cls, beta: float) -> "Regularizer":
        beta = float(beta)
        if not beta > 0 or not math.isfinite(beta):
            raise DomainError(f"power regularizer needs beta > 0, got {beta}")
        return cls(POWER, beta)

    @classmethod
    def smoothstep(cls, tau: float) -> "Regularizer":
        tau = float(tau)
        if not tau > 0 or not math.isfinite(tau):
            raise DomainError(f"smoothstep regularizer needs tau > 0, got {tau}")
        return cls(SMOOTHSTEP, tau)

    @classmethod
    def custom(cls, r: Callable, rprime: Callable, primitive: Callable | None = None,
               label: str = "custom", validate: bool = True) -> "Regularizer":
        """Wrap user-supplied ``r`` and ``r'``.

        ``primitive`` may be given in closed form; otherwise it is computed by
        adaptive quadrature (relative tolerance 1e-12) and memoized.
        """
        r_vec = np.vectorize(lambda s: float(r(s)), otypes=[float])
        rp_vec = np.vectorize(lambda s: float(rprime(s)), otypes=[float])
        if primitive is None:
            @functools.lru_cache(maxsize=65536)
            def _prim(t):
                if t == 0.0:
                    return 0.0
                val, _ = integrate.quad(lambda s: float(r(s)), 0.0, t,
                                        epsabs=0.0, epsrel=1e-12, limit=200)
                return val
            prim_vec = np.vectorize(lambda t: _prim(float(t)), otypes=[float])
        else:
            prim_vec = np.vectorize(lambda t: float(primitive(t)), otypes=[float])
        reg = cls(CUSTOM, None, r_vec, rp_vec, prim_vec, label)
        if validate:
            problems = membership_violations(reg)
            if problems:
                raise DomainError("custom regularizer is not in the class: " + "; ".join(problems))
        return reg

    # -- identity -----------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Regularizer):
            return NotImplemented
        if self.kind == CUSTOM or other.kind == CUSTOM:
            return self is other
        return (self.kind, self.param) == (other.kind, other.param)

    def __hash__(self):
        if self.kind == CUSTOM:
            return id(self)
        return hash((self.kind, self.param))

    @property
    def name(self) -> str:
        if self.kind == GEOMETRIC:
            return GEOMETRIC
        if self.kind == CUSTOM:
            return self.label or CUSTOM
        return f"{self.kind}:{self.param:g}"

    def __str__(self):
        return self.name

    # -- scalar features ----------------------------------------------------
    @property
    def r0(self) -> float:
        return float(self.r(0.0))

    @property
    def rprime0(self) -> float:
        return float(self.rprime(0.0))

    @property
    def strictly_increasing(self) -> bool:
        """Strict monotonicity on [0, inf) (sampled for custom kinds)."""
        if self.kind == POWER:
            return True
        if self.kind in (GEOMETRIC, SMOOTHSTEP):
            return False
        vals = self.r(np.concatenate([[0.0], MEMBERSHIP_GRID]))
        return bool(np.all(np.diff(vals) > 0))

    @property
    def lipschitz(self) -> float | None:
        """Lipschitz constant of r, or None when unknown (custom)."""
        if self.kind == GEOMETRIC:
            return 0.0
        if self.kind == POWER:
            return self.param
        if self.kind == SMOOTHSTEP:
            return 1.5 / self.param
        return None

    @property
    def tail_beta(self) -> float | None:
        """The exponent at which the tail limit is finite and positive, if any."""
        return self.param if self.kind == POWER else None

    def saturation_point(self, eps: float) -> float | None:
        """Smallest documented S with r(S) >= 1 - eps."""
        if self.kind == GEOMETRIC:
            return 0.0
        if self.kind == POWER:
            if eps <= 0.0:
                return math.inf
            return max(eps ** (-1.0 / self.param) - 1.0, 0.0)
        if self.kind == SMOOTHSTEP:
            return self.param
        return None

    # -- vectorized evaluation ---------------------------------------------
    def r(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == GEOMETRIC:
            return np.ones_like(s)
        if self.kind == POWER:
            return -np.expm1(-self.param * np.log1p(s))
        if self.kind == SMOOTHSTEP:
            t = np.minimum(s / self.param, 1.0)
            return t * t * (3.0 - 2.0 * t)
        return self._r(s)

    def rprime(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == GEOMETRIC:
            return np.zeros_like(s)
        if self.kind == POWER:
            return self.param * np.exp(-(self.param + 1.0) * np.log1p(s))
        if self.kind == SMOOTHSTEP:
            t = np.minimum(s / self.param, 1.0)
            return 6.0 * t * (1.0 - t) / self.param
        return self._rprime(s)

    def primitive(self, t):
        """R evaluated at norm ``t``: the integral of r over [0, t]."""
        t = np.asarray(t, dtype=float)
        if self.kind == GEOMETRIC:
            return t.copy()
        if self.kind == POWER:
            return _power_primitive(t, self.param)
        if self.kind == SMOOTHSTEP:
            tau = self.param
            v = np.minimum(t / tau, 1.0)
            return np.where(t <= tau, tau * v ** 3 * (1.0 - 0.5 * v), 0.5 * tau + (t - tau))
        return self._primitive(t)

    def r_over_s(self, s):
        """r(s)/s with the continuous value r'(0) at s = 0 when r(0) = 0."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.r(s) / s
        zero = s == 0
        if np.any(zero):
            out = np.where(zero, self.rprime0 if self.r0 == 0 else np.inf, out)
        return out


def _power_primitive(t, beta):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = (beta + 1.0) * t < _SERIES_CUTOFF
    big = ~small
    if np.any(big):
        tb = t[big]
        if beta == 1.0:
            out[big] = tb - np.log1p(tb)
        else:
            out[big] = tb - np.expm1((1.0 - beta) * np.log1p(tb)) / (1.0 - beta)
    if np.any(small):
        # R(t) = sum_k (-1)^(k+1) (beta)_k / k! * t^(k+1) / (k+1)
        ts = t[small]
        coef = beta * ts  # (beta)_1 / 1! * t
        acc = coef * ts / 2.0
        for k in range(1, 40):
            coef = -coef * (beta + k) / (k + 1) * ts
            acc = acc + coef * ts / (k + 2)
        out[small] = acc
    return out


# -- module-level operations ------------------------------------------------

def _scalar_or_array(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def eval_r(reg: Regularizer, s):
    """Evaluate r(s) for s >= 0."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise DomainError("r is defined on [0, inf)")
    return _scalar_or_array(reg.r(s_arr))


def eval_R(reg: Regularizer, t):
    """Evaluate the loss R at norm t >= 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError("R is evaluated at a norm, which must be >= 0")
    return _scalar_or_array(reg.primitive(t_arr))


def grad_R(reg: Regularizer, x) -> np.ndarray:
    """Gradient r(|x|) x / |x|; the zero vector at the origin when r(0) = 0."""
    x = np.asarray(x, dtype=float)
    rho = float(np.linalg.norm(x))
    if rho == 0.0:
        if reg.r0 > 0:
            raise SingularityError("grad R is singular at the origin when r(0) > 0")
        return np.zeros_like(x)
    return float(reg.r(rho)) * x / rho


def hess_R(reg: Regularizer, x) -> np.ndarray:
    """Hessian r'(|x|) xx^T/|x|^2 + r(|x|)/|x| (I - xx^T/|x|^2).

    At the origin the continuous extension r'(0) I is returned when r(0) = 0;
    with r(0) > 0 the Hessian blows up and :class:`SingularityError` is raised.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    rho = float(np.linalg.norm(x))
    if rho == 0.0:
        if reg.r0 > 0:
            raise SingularityError("Hessian of R is undefined at the origin when r(0) > 0")
        return reg.rprime0 * np.eye(d)
    e = x / rho
    proj = np.outer(e, e)
    return float(reg.rprime(rho)) * proj + float(reg.r(rho)) / rho * (np.eye(d) - proj)


def tail_limit(reg: Regularizer, beta: float) -> TailLimit:
    """lim_{s -> inf} s^beta (1 - r(s)); exact for builtins, flagged estimate otherwise."""
    beta = float(beta)
    if not beta > 0:
        raise DomainError("tail exponent must be positive")
    if reg.kind in (GEOMETRIC, SMOOTHSTEP):
        return TailLimit(0.0)
    if reg.kind == POWER:
        if beta < reg.param:
            return TailLimit(0.0)
        if beta == reg.param:
            return TailLimit(1.0)
        return TailLimit(math.inf)
    # Richardson step on s^beta (1 - r(s)) ~ l + c/s; larger s loses digits to 1 - r
    s = 1e5
    e1 = float(s ** beta * (1.0 - reg.r(s)))
    e2 = float((2 * s) ** beta * (1.0 - reg.r(2 * s)))
    return TailLimit(2.0 * e2 - e1, estimate=True)


def _tail_gap(reg: Regularizer, s_from: float) -> float | None:
    """Integral of 1 - r over [s_from, inf) when known in closed form."""
    if reg.kind == GEOMETRIC:
        return 0.0
    if reg.kind == SMOOTHSTEP and s_from >= reg.param:
        return 0.0
    if reg.kind == POWER:
        b = reg.param
        if b <= 1.0:
            return math.inf
        return (1.0 + s_from) ** (1.0 - b) / (b - 1.0)
    return None


def l1_distance(reg1: Regularizer, reg2: Regularizer) -> float:
    """The integral of |r1 - r2| over [0, inf); ``inf`` when it diverges."""
    if reg1 == reg2:
        return 0.0
    cut = 64.0
    for reg in (reg1, reg2):
        if reg.kind == SMOOTHSTEP:
            cut = max(cut, reg.param)

    def gap(s):
        return abs(float(reg1.r(s)) - float(reg2.r(s)))

    breaks = [b for b in (1.0, 4.0, 16.0) if b < cut]
    for reg in (reg1, reg2):
        if reg.kind == SMOOTHSTEP and reg.param < cut:
            breaks.append(reg.param)
    head, _ = integrate.quad(gap, 0.0, cut, points=sorted(set(breaks)) or None,
                             epsabs=1e-13, epsrel=1e-11, limit=400)
    t1, t2 = _tail_gap(reg1, cut), _tail_gap(reg2, cut)
    if t1 is not None and t2 is not None:
        # distinct builtins: a divergent tail on either side never cancels
        if math.isinf(t1) or math.isinf(t2):
            return math.inf
        # past the cut, r1 - r2 keeps one sign for every builtin pair
        return head + abs(t1 - t2)
    tail, _ = integrate.quad(gap, cut, math.inf, epsabs=1e-13, epsrel=1e-10, limit=400)
    return head + tail


def membership_violations(reg: Regularizer, grid: np.ndarray = MEMBERSHIP_GRID) -> list[str]:
    """Sampled checks of class membership; an empty list means no violation found."""
    problems = []
    r0 = float(reg.r(0.0))
    if not 0.0 <= r0 <= 1.0:
        problems.append(f"r(0)={r0} outside [0, 1]")
    vals = reg.r(grid)
    if np.any(vals <= 0) or np.any(vals > 1.0 + 1e-15):
        problems.append("r(s) must lie in (0, 1] for s > 0")
    if np.any(reg.rprime(grid) < 0):
        problems.append("r'(s) must be >= 0")
    # a finite grid cannot see the limit; flag tails that stall visibly below 1
    gap_end = 1.0 - vals[-1]
    gap_mid = 1.0 - float(reg.r(grid[-1] * 1e-4))
    if gap_end > 1e-6 and gap_end > 0.9 * gap_mid:
        problems.append("r(s) does not approach 1")
    return problems


def parse_regularizer(spec: str) -> Regularizer:
    """Parse ``geometric``, ``power:<beta>`` or ``smoothstep:<tau>``."""
    text = spec.strip().lower()
    if text == GEOMETRIC:
        return Regularizer.geometric()
    head, sep, arg = text.partition(":")
    if sep and head in (POWER, SMOOTHSTEP):
        try:
            value = float(arg)
        except ValueError:
            raise SpecParseError(f"bad regularizer {spec!r}; valid forms: {VALID_SPECS}") from None
        try:
            return Regularizer.power(value) if head == POWER else Regularizer.smoothstep(value)
        except DomainError as exc:
            raise SpecParseError(f"bad regularizer {spec!r}: {exc}") from None
    raise SpecParseError(f"bad regularizer {spec!r}; valid forms: {VALID_SPECS}")
