import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geosplat.geo_priors import (AffineFit, BadMagic, DegenerateRegression, DepthMap, DimensionMismatch,
                                 Direction, NonUnitNormals, NormalMap, TooFewInliers, align_scale_shift,
                                 apply_affine, load_prior, prior_from_bytes, prior_to_bytes, store_prior,
                                 stub_estimate)
from oracles import lstsq_affine


def ramp(h=16, w=16, lo=1.0, hi=4.0):
    rng = np.random.default_rng(h * w)
    return rng.uniform(lo, hi, (h, w))


@pytest.mark.parametrize("a, b", [(2.0, 3.0), (0.5, -1.0), (1.0, 0.0)])
def test_exact_recovery(a, b):
    prior = ramp()
    fit = align_scale_shift(prior, a * prior + b)
    assert fit.a == pytest.approx(a, abs=1e-9)
    assert fit.b == pytest.approx(b, abs=1e-9)
    assert fit.inlier_count == prior.size
    assert fit.residual_rms < 1e-9


def test_matches_lstsq_oracle_with_noise_and_mask():
    rng = np.random.default_rng(7)
    prior = ramp(20, 24)
    rendered = 1.7 * prior - 0.4 + rng.normal(0, 0.05, prior.shape)
    mask = rng.uniform(size=prior.shape) > 0.3
    prior[0, :5] = 0.0  # invalid prior pixels are skipped even inside the mask
    fit = align_scale_shift(prior, rendered, mask)
    sel = mask & (prior > 0)
    a, b, _ = lstsq_affine(prior[sel], rendered[sel])
    assert fit.a == pytest.approx(a, rel=1e-10)
    assert fit.b == pytest.approx(b, rel=1e-10, abs=1e-12)
    assert fit.inlier_count == int(sel.sum())


def test_render_to_prior_direction_inverts():
    prior = ramp()
    rendered = 2.0 * prior + 3.0
    fit = align_scale_shift(prior, rendered, direction=Direction.RENDER_TO_PRIOR)
    assert fit.a == pytest.approx(0.5) and fit.b == pytest.approx(-1.5)
    np.testing.assert_allclose(fit.aligned_prior(prior), rendered, rtol=1e-12)


def test_degenerate_and_too_few():
    with pytest.raises(DegenerateRegression):
        align_scale_shift(np.full((8, 8), 2.0), ramp(8, 8))
    mask = np.zeros((8, 8), bool)
    mask[0, 0] = True
    with pytest.raises(TooFewInliers):
        align_scale_shift(ramp(8, 8), ramp(8, 8), mask)
    with pytest.raises(DimensionMismatch):
        align_scale_shift(ramp(8, 8), ramp(8, 9))


@given(st.floats(0.1, 10), st.floats(-5, 5), st.integers(0, 1000))
def test_recovery_property(a, b, seed):
    prior = np.random.default_rng(seed).uniform(1, 5, (6, 7))
    fit = align_scale_shift(prior, a * prior + b)
    assert fit.a == pytest.approx(a, rel=1e-8)
    assert fit.b == pytest.approx(b, abs=1e-7)


def test_apply_affine_invalidates_nonpositive():
    d = DepthMap(np.array([[1.0, 2.0], [0.0, 3.0]]))
    out = apply_affine(d, AffineFit(1.0, -1.5, 3, 0.0))
    np.testing.assert_array_equal(out.values, [[0.0, 0.5], [0.0, 1.5]])


# -- WVDM container --------------------------------------------------------------------------

dims = st.tuples(st.integers(1, 12), st.integers(1, 12))


@given(dims, st.integers(0, 10 ** 6))
def test_depth_round_trip(hw, seed):
    v = np.random.default_rng(seed).uniform(0, 10, hw).astype(np.float32)
    d = DepthMap(v)
    assert prior_from_bytes(prior_to_bytes(d)) == d


@given(dims, st.integers(0, 10 ** 6))
def test_normal_round_trip(hw, seed):
    n = np.random.default_rng(seed).normal(size=hw + (3,))
    n = (n / np.linalg.norm(n, axis=2, keepdims=True)).astype(np.float32)
    nm = NormalMap(n)
    back = prior_from_bytes(prior_to_bytes(nm))
    assert back == nm


def test_header_layout():
    blob = prior_to_bytes(DepthMap(np.ones((2, 3), np.float32)))
    assert blob[:4] == b"WVDM"
    assert np.frombuffer(blob[4:16], "<u4").tolist() == [3, 2, 1]
    assert len(blob) == 16 + 6 * 4


def test_bad_blobs():
    good = prior_to_bytes(DepthMap(np.ones((2, 3), np.float32)))
    with pytest.raises(BadMagic):
        prior_from_bytes(b"XXXX" + good[4:])
    with pytest.raises(BadMagic):
        prior_from_bytes(good[:10])
    with pytest.raises(DimensionMismatch):
        prior_from_bytes(good[:-4])
    with pytest.raises(DimensionMismatch):
        prior_from_bytes(good[:12] + (2).to_bytes(4, "little") + good[16:])


def test_strict_normal_check():
    n = np.zeros((4, 4, 3), np.float32)
    n[..., 2] = 2.0
    blob = prior_to_bytes(NormalMap(n))
    with pytest.raises(NonUnitNormals):
        prior_from_bytes(blob)
    assert prior_from_bytes(blob, strict=False).values.shape == (4, 4, 3)


def test_zero_normals_are_invalid_not_errors():
    n = np.zeros((3, 3, 3), np.float32)
    n[0, 0] = [0, 0, 1]
    assert prior_from_bytes(prior_to_bytes(NormalMap(n))).valid.sum() == 1


def test_file_round_trip(tmp_path):
    d = DepthMap(ramp(5, 4).astype(np.float32))
    store_prior(tmp_path / "d.wvdm", d)
    assert load_prior(tmp_path / "d.wvdm") == d


# -- stub estimator ---------------------------------------------------------------------------

class FakeRender:
    def __init__(self, depth, normal, alpha):
        self.depth, self.normal, self.alpha = depth, normal, alpha


def test_stub_with_oracle_applies_distortion_and_mask():
    depth = ramp(6, 6)
    normal = np.zeros((6, 6, 3))
    normal[..., 2] = -0.5
    alpha = np.ones((6, 6))
    alpha[0] = 0.2
    d, n = stub_estimate(np.zeros((6, 6, 3)), FakeRender(depth, normal, alpha), distortion=(0.8, 0.3))
    np.testing.assert_allclose(d.values[1:], 0.8 * depth[1:] + 0.3)
    assert not d.valid[0].any()
    np.testing.assert_allclose(n.values[1:, :, 2], -1.0)
    n.check_unit()
    fit = align_scale_shift(d, depth)
    assert fit.a == pytest.approx(1 / 0.8) and fit.b == pytest.approx(-0.3 / 0.8)


def test_stub_noise_is_seeded():
    fr = FakeRender(ramp(5, 5), np.tile([0, 0, -1.0], (5, 5, 1)), np.ones((5, 5)))
    a, _ = stub_estimate(np.zeros((5, 5, 3)), fr, noise=0.1, rng=np.random.default_rng(4))
    b, _ = stub_estimate(np.zeros((5, 5, 3)), fr, noise=0.1, rng=np.random.default_rng(4))
    assert a == b
    assert not np.allclose(a.values, fr.depth)


def test_stub_without_oracle():
    d, n = stub_estimate(np.zeros((4, 8, 3)))
    assert d.valid.all() and np.all(np.diff(d.values, axis=1) > 0)
    n.check_unit()


@given(arrays(np.float64, (4, 4), elements=st.floats(0.5, 5)))
def test_mask_of_valid_prior(values):
    values[0, 0] = 0.0
    assert DepthMap(values).valid.sum() == 15
