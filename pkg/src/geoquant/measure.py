"""Finite discrete probability measures on R^d and synthetic generators."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError, SpecParseError

LINE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted, pairwise-distinct atoms. Build with :func:`from_points`."""

    atoms: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.atoms.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def __len__(self):
        return self.n_atoms

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def covariance(self) -> np.ndarray:
        """Weighted (population) covariance matrix."""
        centered = self.atoms - self.mean()
        return (centered * self.weights[:, None]).T @ centered

    def diameter(self) -> float:
        if self.n_atoms > 2000:
            lo, hi = self.atoms.min(axis=0), self.atoms.max(axis=0)
            return float(np.linalg.norm(hi - lo))
        diff = self.atoms[:, None, :] - self.atoms[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    def is_uniform(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.n_atoms) <= tol))

    def to_json(self) -> dict:
        return {"dim": self.dim, "atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


def from_points(points, weights=None) -> DiscreteMeasure:
    """Empirical (or weighted) measure; exact duplicates are merged in first-seen order."""
    try:
        pts = np.array(points, dtype=float)
    except ValueError:
        raise DomainError("points must share one dimension") from None
    if pts.size == 0:
        raise DomainError("a measure needs at least one point")
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DomainError("points must share one dimension")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    n = pts.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != n:
            raise DomainError("one weight per point is required")
        if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be positive")
    pts = pts + 0.0  # -0.0 -> 0.0 so equal coordinates compare equal bytewise
    _, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    summed = np.bincount(inverse, weights=w)
    order = np.argsort(first, kind="stable")
    atoms = np.ascontiguousarray(pts[first[order]])
    merged = summed[order]
    merged = merged / merged.sum()
    return DiscreteMeasure(atoms, merged)


def transform(m: DiscreteMeasure, O, b) -> DiscreteMeasure:
    """Pushforward under z -> O z + b for orthogonal O."""
    O = np.asarray(O, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    d = m.dim
    if O.shape != (d, d) or b.shape != (d,):
        raise DomainError("transform dimensions do not match the measure")
    if not np.allclose(O.T @ O, np.eye(d), rtol=0.0, atol=1e-10):
        raise PreconditionError("transform matrix is not orthogonal")
    atoms = m.atoms @ O.T + b
    return DiscreteMeasure(np.ascontiguousarray(atoms), m.weights.copy())


def atom_index(m: DiscreteMeasure, x) -> int | None:
    x = np.asarray(x, dtype=float)
    hit = np.flatnonzero(np.all(m.atoms == x, axis=1))
    return int(hit[0]) if hit.size else None


def atom_mass(m: DiscreteMeasure, x) -> float:
    """P[{x}] under exact coordinate equality."""
    i = atom_index(m, x)
    return 0.0 if i is None else float(m.weights[i])


def is_line_supported(m: DiscreteMeasure, tol: float = LINE_TOL):
    """Return ``(base, direction)`` if all atoms lie on one line, else ``None``.

    The test is on the singular values of the centered atom matrix: the
    second one must not exceed ``tol`` times the scale of the first. A single
    atom is reported as supported on the line through it with direction e1.
    """
    d = m.dim
    if m.n_atoms == 1:
        e1 = np.zeros(d)
        e1[0] = 1.0
        return m.atoms[0].copy(), e1
    base = m.mean()
    centered = m.atoms - base
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    second = sv[1] if sv.shape[0] > 1 else 0.0
    if second > tol * max(1.0, sv[0]):
        return None
    direction = vt[0]
    lead = np.flatnonzero(np.abs(direction) > 1e-15)[0]
    if direction[lead] < 0:
        direction = -direction
    return base, direction


# -- generators -------------------------------------------------------------

class Generator:
    """A seedable sampler of points; ``draw`` returns an (n, dim) array."""

    dim: int

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformDisk(Generator):
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    dim: int = 2

    def draw(self, n, rng):
        rad = self.radius * np.sqrt(rng.random(n))
        ang = 2.0 * np.pi * rng.random(n)
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]) + np.asarray(self.center)


@dataclass(frozen=True)
class UniformSegment(Generator):
    a: tuple
    b: tuple

    @property
    def dim(self):
        return len(self.a)

    def draw(self, n, rng):
        a, b = np.asarray(self.a, float), np.asarray(self.b, float)
        t = rng.random(n)[:, None]
        return a + t * (b - a)


@dataclass(frozen=True)
class UniformTriangle(Generator):
    vertices: tuple

    @property
    def dim(self):
        return len(self.vertices[0])

    def draw(self, n, rng):
        v = np.asarray(self.vertices, float)
        s, t = rng.random(n), rng.random(n)
        flip = s + t > 1
        s[flip], t[flip] = 1 - s[flip], 1 - t[flip]
        return v[0] + s[:, None] * (v[1] - v[0]) + t[:, None] * (v[2] - v[0])


@dataclass(frozen=True)
class Gaussian(Generator):
    mean: tuple
    covariance: tuple

    def __post_init__(self):
        S = np.asarray(self.covariance, float)
        if S.shape != (len(self.mean),) * 2 or not np.allclose(S, S.T):
            raise DomainError("covariance must be a symmetric d x d matrix")
        if not np.all(np.linalg.eigvalsh(S) > 0):
            raise DomainError("covariance must be positive definite")

    @property
    def dim(self):
        return len(self.mean)

    def draw(self, n, rng):
        return rng.multivariate_normal(np.asarray(self.mean, float),
                                       np.asarray(self.covariance, float), size=n,
                                       method="cholesky")


@dataclass(frozen=True)
class PointMass(Generator):
    x: tuple

    @property
    def dim(self):
        return len(self.x)

    def draw(self, n, rng):
        return np.tile(np.asarray(self.x, float), (n, 1))


@dataclass(frozen=True)
class UniformCircle(Generator):
    """Exact equi-angular grid on a circle; ``draw`` ignores ``n`` and the rng.

    For an even grid the second half is the exact negation of the first, so
    the resulting measure is invariant under x -> -x in floating point.
    """

    radius: float = 1.0
    n_points: int = 360
    dim: int = 2

    def points(self):
        k = self.n_points
        if k % 2 == 0:
            ang = 2.0 * np.pi * np.arange(k // 2) / k
            half = self.radius * np.column_stack([np.cos(ang), np.sin(ang)])
            # snap exact axis values to kill cos(pi/2) residue
            half[np.abs(half) < 1e-15 * self.radius] = 0.0
            return np.vstack([half, -half])
        ang = 2.0 * np.pi * np.arange(k) / k
        return self.radius * np.column_stack([np.cos(ang), np.sin(ang)])

    def draw(self, n, rng):
        return self.points()


@dataclass(frozen=True)
class Mixture(Generator):
    components: tuple  # of (weight, Generator)

    def __post_init__(self):
        total = sum(w for w, _ in self.components)
        if not math.isclose(total, 1.0, abs_tol=1e-12):
            raise DomainError(f"mixture weights sum to {total}, not 1")
        dims = {g.dim for _, g in self.components}
        if len(dims) != 1:
            raise DomainError("mixture components disagree on dimension")

    @property
    def dim(self):
        return self.components[0][1].dim

    def draw(self, n, rng):
        probs = np.array([w for w, _ in self.components])
        labels = rng.choice(len(probs), size=n, p=probs / probs.sum())
        out = np.empty((n, self.dim))
        for k, (_, g) in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = g.draw(idx.size, rng)
        return out


def sample(g: Generator, n: int, seed) -> DiscreteMeasure:
    """Empirical measure of ``n`` iid draws; deterministic in ``seed``."""
    if n < 1:
        raise DomainError("sample size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = g.draw(n, rng)
    if pts.shape[1] != g.dim:
        raise DomainError("generator produced points of the wrong dimension")
    return from_points(pts)


# -- spec mini-language -----------------------------------------------------

GENERATOR_HELP = """\
generator specs:
  disk:R                      uniform on the disk of radius R (2-D)
  segment:x1,y1,x2,y2         uniform on a segment (any even count -> 2 endpoints)
  triangle:x1,y1,x2,y2,x3,y3  uniform on a filled triangle
  gauss:m1,m2,s11,s12,s22     bivariate Gaussian
  circle:R,K                  exact K-point grid on a circle (ignores n)
  point:x1,...,xd             point mass
  mix:w1*SPEC1+w2*SPEC2       mixture (weights must sum to 1)"""


def _floats(text, spec):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise SpecParseError(f"bad numbers in generator {spec!r}") from None


def parse_generator(spec: str) -> Generator:
    """Parse the generator mini-language documented in ``GENERATOR_HELP``."""
    text = spec.strip()
    head, sep, arg = text.partition(":")
    head = head.lower()
    if not sep:
        raise SpecParseError(f"bad generator {spec!r}\n{GENERATOR_HELP}")
    if head == "mix":
        comps = []
        for part in arg.split("+"):
            w, star, sub = part.partition("*")
            if not star:
                raise SpecParseError(f"mixture part {part!r} needs weight*spec")
            comps.append((float(w), parse_generator(sub)))
        try:
            return Mixture(tuple(comps))
        except DomainError as exc:
            raise SpecParseError(str(exc)) from None
    vals = _floats(arg, spec)
    try:
        if head == "disk" and len(vals) == 1:
            return UniformDisk(vals[0])
        if head == "segment" and len(vals) >= 2 and len(vals) % 2 == 0:
            h = len(vals) // 2
            return UniformSegment(tuple(vals[:h]), tuple(vals[h:]))
        if head == "triangle" and len(vals) == 6:
            return UniformTriangle((tuple(vals[0:2]), tuple(vals[2:4]), tuple(vals[4:6])))
        if head == "gauss" and len(vals) == 5:
            m1, m2, s11, s12, s22 = vals
            return Gaussian((m1, m2), ((s11, s12), (s12, s22)))
        if head == "circle" and len(vals) == 2:
            return UniformCircle(vals[0], int(vals[1]))
        if head == "point" and vals:
            return PointMass(tuple(vals))
    except DomainError as exc:
        raise SpecParseError(str(exc)) from None
    raise SpecParseError(f"bad generator {spec!r}\n{GENERATOR_HELP}")


# -- file formats -----------------------------------------------------------

def read_csv(path) -> DiscreteMeasure:
    """One row per point, a required header, an optional ``weight`` column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DomainError(f"{path}: empty file") from None
        try:
            [float(h) for h in header]
        except ValueError:
            pass
        else:
            raise DomainError(f"{path}: a header row is required")
        wcol = header.index("weight") if "weight" in header else None
        rows, weights = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DomainError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) != len(header):
                raise DomainError(f"{path}:{lineno}: expected {len(header)} columns")
            if wcol is not None:
                weights.append(vals.pop(wcol))
            rows.append(vals)
    return from_points(rows, weights if wcol is not None else None)


def write_csv(m: DiscreteMeasure, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(m.dim)] + ["weight"])
        for z, p in zip(m.atoms, m.weights):
            w.writerow([repr(float(v)) for v in z] + [repr(float(p))])


def to_json_string(m: DiscreteMeasure) -> str:
    return json.dumps(m.to_json())


def from_json(data) -> DiscreteMeasure:
    if isinstance(data, str):
        data = json.loads(data)
    m = from_points(data["atoms"], data["weights"])
    if m.dim != int(data["dim"]):
        raise DomainError("dim field disagrees with atoms")
    return m


def embed(points: Sequence, basis, origin) -> np.ndarray:
    """Map k-dim coordinates into R^d through an orthonormal ``basis`` (d x k)."""
    return np.asarray(origin, float) + np.asarray(points, float) @ np.asarray(basis, float).T
