import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from ebars.spline_basis import (
    basis_at,
    build_knot_vector,
    design_matrix_1d,
    row_kron,
    tensor_design_matrix,
)
from oracles import basis_oracle

interior_knots = st.lists(st.floats(1e-6, 1 - 1e-6, allow_nan=False), max_size=8).map(sorted)
degrees = st.sampled_from([0, 1, 2, 3])


@st.composite
def separated_knots(draw, max_k=6, gap=0.02):
    k = draw(st.integers(0, max_k))
    pts = draw(st.lists(st.floats(gap, 1 - gap), min_size=k, max_size=k, unique=True))
    pts = sorted(pts)
    if any(b - a < gap for a, b in zip(pts, pts[1:])):
        pts = list(np.linspace(0, 1, k + 2)[1:-1])
    return pts


# -- knot vectors ------------------------------------------------------------------


def test_empty_cubic_knot_vector():
    kv = build_knot_vector([], 3)
    np.testing.assert_array_equal(kv.knots, [0, 0, 0, 0, 1, 1, 1, 1])
    assert kv.dimension == 4


def test_single_interior_linear():
    kv = build_knot_vector([0.5], 1)
    np.testing.assert_array_equal(kv.knots, [0, 0, 0.5, 1, 1])
    assert kv.dimension == 3


def test_two_interior_linear_dimension():
    assert build_knot_vector([0.3, 0.7], 1).dimension == 4


@pytest.mark.parametrize("bad", [[0.0], [1.0], [-0.1], [0.5, 1.2]])
def test_rejects_knots_outside_open_interval(bad):
    with pytest.raises(ValueError):
        build_knot_vector(bad, 2)


def test_rejects_unsorted_and_bad_degree():
    with pytest.raises(ValueError):
        build_knot_vector([0.7, 0.3], 1)
    with pytest.raises(ValueError):
        build_knot_vector([0.5], -1)
    with pytest.raises(ValueError):
        build_knot_vector([0.5], 1.5)


def test_duplicate_interior_knots_allowed():
    kv = build_knot_vector([0.2, 0.2, 0.5], 1)
    assert kv.dimension == 5
    row = basis_at(kv, 0.2)
    assert row.sum() == pytest.approx(1.0)


@given(interior_knots, degrees)
def test_knot_vector_structure(interior, p):
    kv = build_knot_vector(interior, p)
    t = kv.knots
    assert np.all(np.diff(t) >= 0)
    assert np.all(t[: p + 1] == 0) and np.all(t[-(p + 1):] == 1)
    assert kv.dimension == len(interior) + p + 1 == len(t) - p - 1


# -- basis values ------------------------------------------------------------------------


def test_hat_peak():
    np.testing.assert_allclose(basis_at(build_knot_vector([0.5], 1), 0.5), [0, 1, 0])


def test_bernstein_left_boundary():
    np.testing.assert_allclose(basis_at(build_knot_vector([], 3), 0.0), [1, 0, 0, 0])


def test_last_basis_is_one_at_right_end():
    for interior, p in [([], 3), ([0.25, 0.75], 3), ([0.5], 1), ([0.3, 0.3], 2), ([0.4], 0)]:
        row = basis_at(build_knot_vector(interior, p), 1.0)
        assert row[-1] == pytest.approx(1.0) and row[:-1].sum() == pytest.approx(0.0)


def test_cubic_at_point_against_oracle():
    kv = build_knot_vector([0.25, 0.75], 3)
    row = basis_at(kv, 0.6)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(row) <= 4
    np.testing.assert_allclose(row, basis_oracle(kv, 0.6), atol=1e-12)


def test_right_continuous_at_interior_breakpoint():
    kv = build_knot_vector([0.5], 0)
    np.testing.assert_array_equal(basis_at(kv, 0.5), [0, 1])
    np.testing.assert_array_equal(basis_at(kv, 0.4999), [1, 0])


@pytest.mark.parametrize("x", [-1e-9, 1.0000001, np.nan])
def test_basis_rejects_out_of_range(x):
    with pytest.raises(ValueError):
        basis_at(build_knot_vector([0.5], 1), x)


def test_design_nodal_interpolation():
    Z = design_matrix_1d(build_knot_vector([0.5], 1), [0, 0.5, 1])
    np.testing.assert_allclose(Z, np.eye(3))


def test_design_midpoint_equal_weights():
    row = design_matrix_1d(build_knot_vector([0.3, 0.7], 1), [0.5])[0]
    nz = row[row > 0]
    np.testing.assert_allclose(nz, [0.5, 0.5])


def test_single_row_sums_to_one():
    row = design_matrix_1d(build_knot_vector([0.1, 0.4, 0.41, 0.9], 3), [0.37])
    assert row.shape == (1, 8)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_design_rejects_out_of_range():
    with pytest.raises(ValueError):
        design_matrix_1d(build_knot_vector([], 1), [0.2, 1.5])


@given(interior_knots, degrees, st.integers(0, 2**32 - 1))
def test_partition_nonnegativity_local_support(interior, p, seed):
    kv = build_knot_vector(interior, p)
    x = np.random.default_rng(seed).random(1000)
    Z = design_matrix_1d(kv, x)
    assert np.all(Z >= 0)
    assert np.max(np.abs(Z.sum(axis=1) - 1)) <= 1e-12
    assert np.max(np.count_nonzero(Z, axis=1)) <= p + 1
    assert np.all(np.isfinite(Z))


@given(separated_knots(), st.sampled_from([1, 2, 3]), st.lists(st.floats(0, 0.999999), min_size=1, max_size=20))
def test_oracle_equivalence(interior, p, xs):
    kv = build_knot_vector(interior, p)
    Z = design_matrix_1d(kv, xs)
    for x, row in zip(xs, Z):
        np.testing.assert_allclose(row, basis_oracle(kv, x), atol=1e-10)


@given(interior_knots, st.sampled_from([1, 2, 3]))
def test_matches_scipy_bspline(interior, p):
    kv = build_knot_vector(interior, p)
    x = np.linspace(0, 1, 57)
    ref = BSpline.design_matrix(x, kv.knots, p).toarray()
    np.testing.assert_allclose(design_matrix_1d(kv, x), ref, atol=1e-10)


@given(st.floats(0.05, 0.95), st.sampled_from([1, 2, 3]), st.integers(0, 2**32 - 1))
def test_near_coincident_knots_stable(a, p, seed):
    kv = build_knot_vector([a, a + 1e-6], p)
    x = np.concatenate([np.random.default_rng(seed).random(500), [a, a + 5e-7, a + 1e-6]])
    Z = design_matrix_1d(kv, x)
    assert np.all(np.isfinite(Z))
    assert np.max(np.abs(Z.sum(axis=1) - 1)) <= 1e-9


# -- tensor products ----------------------------------------------------------------------


def test_tensor_one_dim_equals_univariate():
    kv = build_knot_vector([0.2, 0.6], 3)
    x = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(tensor_design_matrix([kv], x[:, None]), design_matrix_1d(kv, x))


def test_tensor_corner_point():
    kv = build_knot_vector([], 1)
    np.testing.assert_allclose(tensor_design_matrix([kv, kv], [[0.0, 0.0]]), [[1, 0, 0, 0]])


def test_tensor_column_order_first_dim_slowest():
    k1, k2 = build_knot_vector([], 1), build_knot_vector([0.5], 1)
    X = np.array([[0.3, 0.8]])
    Z = tensor_design_matrix([k1, k2], X)
    a, b = design_matrix_1d(k1, X[:, 0])[0], design_matrix_1d(k2, X[:, 1])[0]
    np.testing.assert_allclose(Z[0], np.kron(a, b))
    assert Z.shape == (1, 6)


@given(st.integers(0, 2**32 - 1), interior_knots, interior_knots, degrees, degrees)
def test_tensor_rows_sum_to_one(seed, i1, i2, p1, p2):
    X = np.random.default_rng(seed).random((50, 2))
    kvs = [build_knot_vector(i1, p1), build_knot_vector(i2, p2)]
    Z = tensor_design_matrix(kvs, X)
    assert Z.shape == (50, kvs[0].dimension * kvs[1].dimension)
    np.testing.assert_allclose(Z.sum(axis=1), 1.0, atol=1e-12)


def test_tensor_dimension_mismatch():
    with pytest.raises(ValueError):
        tensor_design_matrix([build_knot_vector([], 1)], np.zeros((3, 2)))


def test_row_kron_three_factors():
    rng = np.random.default_rng(0)
    mats = [rng.random((4, 2)), rng.random((4, 3)), rng.random((4, 2))]
    out = row_kron(mats)
    for i in range(4):
        np.testing.assert_allclose(out[i], np.kron(np.kron(mats[0][i], mats[1][i]), mats[2][i]))
