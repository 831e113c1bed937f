import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoquant.core import QuantileIndex, certify_quantile, dist_fn
from geoquant.errors import DomainError, PreconditionError
from geoquant.measure import UniformCircle, from_points
from geoquant.regularizer import Regularizer
from geoquant.solver import (SolverOptions, Status, brute_force_quantile, contour,
                             inverse_roundtrip, quantile, radial_profile, weighted_median)

REGS = [Regularizer.geometric(), Regularizer.power(1), Regularizer.power(2), Regularizer.smoothstep(1)]


def test_single_atom_quantile_lies_where_r_equals_alpha():
    m = from_points([[1.0, 2.0]])
    sol = quantile(m, Regularizer.power(1), QuantileIndex(0.5, [1.0, 0.0]))
    np.testing.assert_allclose(sol.point, [2.0, 2.0], atol=1e-8)
    assert sol.certificate.satisfied


def test_weighted_median():
    assert weighted_median(np.array([3.0, 1.0, 2.0]), np.ones(3)) == 2.0
    assert weighted_median(np.array([0.0, 1.0]), np.array([1.0, 1.0])) == 0.5
    assert weighted_median(np.array([0.0, 1.0, 5.0]), np.array([1.0, 1.0, 3.0])) == 5.0


def test_options_validation():
    for kw in ({"grad_tol": 0}, {"backtrack_factor": 1.0}, {"armijo_c": 0}, {"max_iter": 0}):
        with pytest.raises(DomainError):
            SolverOptions(**kw)


def test_near_vertex_solution_on_triangle(triangle):
    # the minimizer sits just outside the black hole of a vertex
    sol = quantile(triangle, Regularizer.geometric(), QuantileIndex.at_angle(0.7, 0.0))
    assert sol.status is Status.CONVERGED
    assert np.min(np.linalg.norm(triangle.atoms - sol.point, axis=1)) < 0.2


@pytest.mark.parametrize("theta", np.linspace(0, 2 * np.pi, 13)[:-1])
def test_triangle_contours_certified(triangle, theta):
    for a in (0.05, 0.3, 0.5, 0.7, 0.9, 0.99):
        for reg in REGS:
            sol = quantile(triangle, reg, QuantileIndex.at_angle(a, theta))
            assert sol.certificate.satisfied, (a, reg, sol.status)


def test_brute_force_agreement_in_3d(rng):
    m = from_points(rng.normal(size=(4, 3)), rng.uniform(1, 2, 4))
    for reg in (Regularizer.power(2), Regularizer.geometric()):
        idx = QuantileIndex.from_vector([0.2, -0.1, 0.15])
        q = quantile(m, reg, idx).point
        bounds = np.column_stack([m.atoms.min(0) - 1, m.atoms.max(0) + 1])
        res = 81
        cell = (bounds[:, 1] - bounds[:, 0]) / (res - 1)
        grid_q = brute_force_quantile(m, reg, idx, bounds, res)
        assert np.all(np.abs(q - grid_q) <= 2 * cell)
    with pytest.raises(DomainError):
        brute_force_quantile(m, reg, idx, bounds, 5)


def test_heavy_atom_is_the_median():
    pts = np.array([[0.0, 0.0], [1.0, 0.3], [-2.0, 1.0], [0.5, -1.5]])
    m = from_points(pts, [3, 1, 1, 1])
    sol = quantile(m, Regularizer.geometric(), QuantileIndex(0.0, [1.0, 0.0]))
    assert sol.status is Status.AT_ATOM
    np.testing.assert_array_equal(sol.point, [0.0, 0.0])


def test_proximity_certification_without_screening(triangle):
    z = triangle.atoms[1]
    idx = QuantileIndex.from_vector(dist_fn(triangle, Regularizer.geometric(), z) + [0.05, 0.02])
    sol = quantile(triangle, Regularizer.geometric(), idx, SolverOptions(screen_limit=0))
    assert sol.status is Status.AT_ATOM
    np.testing.assert_array_equal(sol.point, z)


def test_start_on_atom():
    m = from_points([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    idx = QuantileIndex.at_angle(0.3, 0.5)
    ref = quantile(m, Regularizer.geometric(), idx)
    got = quantile(m, Regularizer.geometric(), idx, SolverOptions(start=np.array([1.0, 1.0])))
    np.testing.assert_allclose(got.point, ref.point, atol=1e-9)


def test_degenerate_line_is_flagged():
    m = from_points(np.column_stack([np.arange(5.0), 2 * np.arange(5.0)]))
    u = np.array([1.0, 2.0]) / math.sqrt(5)
    flat = Regularizer.smoothstep(0.5)
    sol = quantile(m, flat, QuantileIndex(0.3, u))
    assert sol.status is Status.DEGENERATE_LINE
    assert sol.certificate.satisfied
    assert sol.line is not None
    # with r(0) > 0 an atom can capture the index before the reduction
    sol = quantile(m, Regularizer.geometric(), QuantileIndex(0.3, u))
    assert sol.status is Status.AT_ATOM and sol.certificate.satisfied
    # strictly increasing regularizers keep the unique Newton path
    sol = quantile(m, Regularizer.power(2), QuantileIndex(0.3, u))
    assert sol.status is Status.CONVERGED


def test_contour_threads_give_certified_rows(triangle):
    a = contour(triangle, Regularizer.power(2), 0.6, n_dirs=24, threads=3)
    b = contour(triangle, Regularizer.power(2), 0.6, n_dirs=24, threads=1)
    assert len(a) == len(b) == 24
    for (u1, s1), (u2, s2) in zip(a, b):
        np.testing.assert_array_equal(u1, u2)
        assert s1.certificate.satisfied and s2.certificate.satisfied
        np.testing.assert_allclose(s1.point, s2.point, atol=1e-8)
    with pytest.raises(DomainError):
        contour(from_points(np.eye(3)), Regularizer.power(2), 0.5, n_dirs=4)


def test_inverse_roundtrip(triangle):
    reg = Regularizer.power(2)
    assert inverse_roundtrip(triangle, reg, [0.3, 0.1]) < 1e-8
    with pytest.raises(PreconditionError):
        inverse_roundtrip(triangle, Regularizer.geometric(), triangle.atoms[0])


def test_radial_profile():
    circle = from_points(UniformCircle(2.0, 100).points())
    reg = Regularizer.power(2)
    r = radial_profile(circle, reg, 0.4)
    sol = quantile(circle, reg, QuantileIndex.at_angle(0.4, 1.1))
    assert np.linalg.norm(sol.point) == pytest.approx(r, abs=1e-8)
    with pytest.raises(PreconditionError):
        radial_profile(from_points([[0.0, 0.0], [1.0, 0.0]]), reg, 0.3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), k=st.integers(0, 3), n=st.integers(1, 12),
       a=st.floats(0.0, 0.95), theta=st.floats(0, 2 * math.pi))
def test_solutions_are_certified(seed, k, n, a, theta):
    rng = np.random.default_rng(seed)
    m = from_points(np.round(rng.normal(size=(n, 2)), 2), rng.uniform(0.2, 3, n))
    sol = quantile(m, REGS[k], QuantileIndex.at_angle(a, theta))
    assert certify_quantile(m, REGS[k], QuantileIndex.at_angle(a, theta), sol.point).satisfied
