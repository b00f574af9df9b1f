import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geosplat import rotations
from oracles import quat_matrix, rodrigues, rotation_angle

finite = st.floats(-1.0, 1.0, allow_nan=False)
quat = arrays(np.float64, 4, elements=finite).filter(lambda q: np.linalg.norm(q) > 0.1)
unit_vec = arrays(np.float64, 3, elements=finite).filter(lambda v: np.linalg.norm(v) > 0.1)


@given(quat)
def test_matrix_matches_scipy(q):
    q = rotations.normalize(q)
    np.testing.assert_allclose(rotations.to_matrix(q), quat_matrix(q), atol=1e-12)


@given(quat, quat)
def test_multiply_composes_matrices(a, b):
    a, b = rotations.normalize(a), rotations.normalize(b)
    np.testing.assert_allclose(rotations.to_matrix(rotations.multiply(a, b)),
                               quat_matrix(a) @ quat_matrix(b), atol=1e-12)


@given(unit_vec, st.floats(-math.pi, math.pi))
def test_axis_angle_matches_rodrigues(axis, angle):
    np.testing.assert_allclose(rotations.to_matrix(rotations.from_axis_angle(axis, angle)),
                               rodrigues(axis, angle), atol=1e-12)


@given(quat, quat)
def test_geodesic_angle_matches_trace_formula(a, b):
    a, b = rotations.normalize(a), rotations.normalize(b)
    got = rotations.geodesic_angle(a, b)
    assert 0.0 <= got <= math.pi
    assert got == pytest.approx(rotation_angle(quat_matrix(a), quat_matrix(b)), abs=1e-6)


@given(quat)
def test_geodesic_is_sign_invariant(q):
    q = rotations.normalize(q)
    assert rotations.geodesic_angle(q, -q) == pytest.approx(0.0, abs=1e-12)


def test_geodesic_small_angle_precision():
    q = rotations.from_axis_angle([0, 0, 1], 1e-9)
    assert rotations.geodesic_angle(np.array([1.0, 0, 0, 0]), q) == pytest.approx(1e-9, rel=1e-6)


@given(quat)
def test_from_matrix_inverts_to_matrix(q):
    q = rotations.canonicalize(rotations.normalize(q))
    back = rotations.from_matrix(rotations.to_matrix(q))
    # q and -q are the same rotation; w = 0 leaves canonicalization ambiguous
    assert min(np.abs(back - q).max(), np.abs(back + q).max()) < 1e-9


@given(quat, quat, st.floats(0.0, 1.0))
def test_slerp_interpolates_angle(a, b, t):
    a, b = rotations.normalize(a), rotations.normalize(b)
    total = rotations.geodesic_angle(a, b)
    mid = rotations.slerp(a, b, t)
    assert rotations.geodesic_angle(a, mid) == pytest.approx(t * total, abs=1e-7)
    assert rotations.geodesic_angle(mid, b) == pytest.approx((1 - t) * total, abs=1e-7)


@given(unit_vec)
def test_align_z_maps_z_onto_n(n):
    q = rotations.align_z(n)
    np.testing.assert_allclose(rotations.to_matrix(q) @ [0, 0, 1], n / np.linalg.norm(n), atol=1e-12)


def test_align_z_antipodal():
    np.testing.assert_allclose(rotations.to_matrix(rotations.align_z([0, 0, -1])) @ [0, 0, 1],
                               [0, 0, -1], atol=1e-15)


@given(quat, arrays(np.float64, (3, 3), elements=finite))
def test_matrix_grad_to_quat_matches_finite_differences(q, G):
    from oracles import central_difference

    f = lambda v: float(np.sum(G * rotations.to_matrix(v)))
    np.testing.assert_allclose(rotations.matrix_grad_to_quat(q, G), central_difference(f, q),
                               atol=1e-6)


def test_canonicalize_makes_w_nonnegative():
    q = np.array([[-0.5, 0.5, 0.5, 0.5], [0.5, -0.5, 0.5, 0.5]])
    out = rotations.canonicalize(q)
    assert np.all(out[:, 0] >= 0)
    np.testing.assert_allclose(out[0], -q[0])
