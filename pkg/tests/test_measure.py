import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geoquant.errors import DomainError, PreconditionError, SpecParseError
from geoquant.measure import (Gaussian, Mixture, PointMass, UniformCircle, UniformDisk,
                              UniformSegment, UniformTriangle, atom_mass, embed, from_json,
                              from_points, is_line_supported, parse_generator, read_csv, sample,
                              to_json_string, transform, write_csv)


def test_duplicates_merge_in_first_seen_order():
    m = from_points([[1, 2], [0, 0], [1, 2], [-0.0, 0.0]], [1, 1, 2, 4])
    np.testing.assert_array_equal(m.atoms, [[1, 2], [0, 0]])
    np.testing.assert_allclose(m.weights, [3 / 8, 5 / 8])
    assert atom_mass(m, [0.0, 0.0]) == pytest.approx(5 / 8)
    assert atom_mass(m, [0.0, 1e-300]) == 0.0


def test_invalid_inputs():
    with pytest.raises(DomainError):
        from_points([])
    with pytest.raises(DomainError):
        from_points([[0, 1], [2, 3]], [1, 0])
    with pytest.raises(DomainError):
        from_points([[0, 1], [2, 3]], [1])
    with pytest.raises(DomainError):
        from_points([[0, np.nan]])
    with pytest.raises(DomainError):
        from_points([[0, 1], [2]])


def test_arrays_are_read_only():
    m = from_points([[0, 1], [2, 3]])
    with pytest.raises(ValueError):
        m.atoms[0, 0] = 5.0


def test_moments_against_hand_values():
    m = from_points([[1, 0], [-1, 0], [0, 2]], [1, 1, 2])
    np.testing.assert_allclose(m.mean(), [0, 1])
    # E[XX^T] - mu mu^T by hand
    np.testing.assert_allclose(m.covariance(), [[0.5, 0.0], [0.0, 1.0]])
    assert m.diameter() == pytest.approx(np.sqrt(5))


def test_transform_pushes_forward():
    m = from_points([[1, 0], [0, 2]], [1, 3])
    O = np.array([[0.0, -1.0], [1.0, 0.0]])
    t = transform(m, O, [1, 1])
    np.testing.assert_allclose(t.atoms, [[1, 2], [-1, 1]])
    np.testing.assert_array_equal(t.weights, m.weights)
    with pytest.raises(PreconditionError):
        transform(m, [[1, 1], [0, 1]], [0, 0])


def test_line_support():
    m = from_points([[0, 1], [1, 2], [3, 4]])
    base, direction = is_line_supported(m)
    np.testing.assert_allclose(abs(direction), [np.sqrt(0.5)] * 2)
    assert is_line_supported(from_points([[0, 0], [1, 0], [0, 1]])) is None
    base, direction = is_line_supported(from_points([[2.0, 3.0]]))
    np.testing.assert_array_equal(base, [2, 3])
    plane = from_points(embed(np.random.default_rng(0).normal(size=(10, 2)), np.eye(3)[:, :2], [0, 0, 1]))
    assert is_line_supported(plane) is None


@pytest.mark.parametrize("spec,cls", [
    ("disk:2", UniformDisk), ("segment:-1,0,1,0", UniformSegment),
    ("triangle:0,0,1,0,0,1", UniformTriangle), ("gauss:0,0,1,0.5,2", Gaussian),
    ("circle:1,8", UniformCircle), ("point:1,2,3", PointMass),
    ("mix:0.5*disk:1+0.5*point:3,0", Mixture),
])
def test_parse_generator(spec, cls):
    g = parse_generator(spec)
    assert isinstance(g, cls)
    pts = g.draw(50, np.random.default_rng(0))
    assert pts.shape[1] == g.dim


@pytest.mark.parametrize("spec", ["disk", "disk:a", "blob:1", "triangle:1,2", "mix:0.3*disk:1",
                                  "mix:disk:1", "gauss:0,0,1,2,1"])
def test_parse_generator_errors(spec):
    with pytest.raises(SpecParseError):
        g = parse_generator(spec)
        g.draw(5, np.random.default_rng(0))


def test_generators_stay_in_support():
    rng = np.random.default_rng(1)
    disk = UniformDisk(2.0, (1.0, 1.0)).draw(2000, rng)
    assert np.all(np.linalg.norm(disk - 1.0, axis=1) <= 2.0)
    tri = UniformTriangle(((0, 0), (1, 0), (0, 1))).draw(2000, rng)
    assert np.all(tri >= 0) and np.all(tri.sum(axis=1) <= 1 + 1e-15)
    seg = UniformSegment((0, 0), (2, 0)).draw(100, rng)
    assert np.all(seg[:, 1] == 0)


def test_circle_grid_is_centrally_symmetric():
    pts = UniformCircle(1.5, 12).points()
    np.testing.assert_array_equal(pts[6:], -pts[:6])
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.5, rtol=1e-15)


def test_sample_is_deterministic():
    g = parse_generator("mix:0.5*disk:1+0.5*point:0,0")
    a, b = sample(g, 300, 7), sample(g, 300, 7)
    np.testing.assert_array_equal(a.atoms, b.atoms)
    # the Dirac component collapses into one heavy atom
    assert atom_mass(a, [0.0, 0.0]) == pytest.approx(0.5, abs=0.1)


def test_csv_and_json_round_trip(tmp_path):
    m = from_points(np.random.default_rng(2).normal(size=(6, 3)), np.arange(1, 7))
    path = tmp_path / "m.csv"
    write_csv(m, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.atoms, m.atoms)
    np.testing.assert_allclose(back.weights, m.weights, rtol=1e-15)
    again = from_json(to_json_string(m))
    np.testing.assert_array_equal(again.atoms, m.atoms)


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\n")
    with pytest.raises(DomainError, match="header"):
        read_csv(bad)
    bad.write_text("x,y\n1,a\n")
    with pytest.raises(DomainError, match="non-numeric"):
        read_csv(bad)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 3)),
              elements=st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 1))))
def test_from_points_invariants(pts):
    m = from_points(pts)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert len({tuple(r) for r in m.atoms.tolist()}) == m.n_atoms
    # every input point keeps its empirical mass
    for z, w in zip(m.atoms, m.weights):
        count = np.sum(np.all(pts + 0.0 == z, axis=1))
        assert w == pytest.approx(count / len(pts), rel=1e-12)
