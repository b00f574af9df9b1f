import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geosplat import rotations
from geosplat.colmap_io import (CameraIntrinsics, DuplicateFrameIndex, DuplicateImageId, MalformedLine,
                                MissingFrameIndex, NonUnitQuaternion, PoseRecord, UnresolvedCamera,
                                UnsupportedModel, frame_index_from_name, parse_cameras, parse_images,
                                read_model, read_model_dir, write_model, write_model_dir)

CAMERAS = """# Camera list with one line of data per camera:
#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]
1 PINHOLE 640 480 500 510 320 240
2 SIMPLE_PINHOLE 32 32 40 16 16
"""

IMAGES = """# Image list with two lines of data per image:
1 1 0 0 0 0 0 0 1 frame_000001.png
10.0 20.0 -1
2 0.7071067811865476 0 0.7071067811865476 0 1 2 3 2 frame_000000.png

"""


def test_parse_cameras_two_models():
    cams = parse_cameras(CAMERAS)
    assert cams[0] == CameraIntrinsics(1, "PINHOLE", 640, 480, 500.0, 510.0, 320.0, 240.0)
    assert cams[1].fx == cams[1].fy == 40.0


def test_parse_images_sorted_by_frame_and_points_line_skipped():
    poses = parse_images(IMAGES)
    assert [p.frame_index for p in poses] == [0, 1]
    assert poses[0].image_id == 2
    # camera center of identity rotation with zero translation
    np.testing.assert_allclose(poses[1].center, [0, 0, 0])


def test_center_is_minus_rt_t():
    poses = parse_images(IMAGES)
    p = poses[0]
    np.testing.assert_allclose(p.center, -p.rotation.T @ np.array(p.t))


@pytest.mark.parametrize("text, err", [
    ("1 OPENCV 10 10 1 1 1 1 0 0 0 0\n", UnsupportedModel),
    ("1 PINHOLE 10 10 1 1 5\n", MalformedLine),
    ("1 PINHOLE 10 10 1 x 5 5\n", MalformedLine),
    ("1 PINHOLE 10 10 1 nan 5 5\n", MalformedLine),
    ("1 PINHOLE 10 10 -1 1 5 5\n", MalformedLine),
    ("1 PINHOLE 10\n", MalformedLine),
])
def test_bad_cameras(text, err):
    with pytest.raises(err):
        parse_cameras(text)


def test_malformed_line_reports_line_number():
    with pytest.raises(MalformedLine) as info:
        parse_cameras("# c\n1 PINHOLE 10 10 1 1 5 5\n2 PINHOLE 10 10 a 1 5 5\n")
    assert info.value.line_no == 3


@pytest.mark.parametrize("text, err", [
    ("1 2 0 0 0 0 0 0 1 frame_000001.png\n\n", NonUnitQuaternion),
    ("1 1 0 0 0 0 0 0 1 f1.png\n\n1 1 0 0 0 0 0 0 1 f2.png\n\n", DuplicateImageId),
    ("1 1 0 0 0 0 0 0 1 a_3.png\n\n2 1 0 0 0 0 0 0 1 b_3.png\n\n", DuplicateFrameIndex),
    ("1 1 0 0 0 0 0 0 1 nodigits.png\n\n", MissingFrameIndex),
    ("1 1 0 0 0 0 0 1 frame_1.png\n\n", MalformedLine),
])
def test_bad_images(text, err):
    with pytest.raises(err):
        parse_images(text)


def test_slightly_off_unit_quaternion_is_renormalized():
    poses = parse_images("1 1.0000001 0 0 0 0 0 0 1 f_0.png\n\n")
    assert np.linalg.norm(poses[0].q) == pytest.approx(1.0, abs=1e-15)


def test_negative_w_is_canonicalized():
    poses = parse_images("1 -1 0 0 0 0 0 0 1 f_0.png\n\n")
    assert poses[0].q[0] == 1.0


def test_unresolved_camera():
    with pytest.raises(UnresolvedCamera):
        read_model("1 PINHOLE 10 10 1 1 5 5\n", "1 1 0 0 0 0 0 0 7 f_0.png\n\n")


@pytest.mark.parametrize("name, idx", [
    ("frame_000012.png", 12), ("dir/img7.jpg", 7), ("a1b22.png", 22), ("00042", 42),
])
def test_frame_index_from_name(name, idx):
    assert frame_index_from_name(name) == idx


def test_points2d_line_may_be_empty_or_populated():
    text = "1 1 0 0 0 0 0 0 1 f_0.png\n1.5 2.5 3 4.5 5.5 -1\n2 1 0 0 0 1 1 1 1 f_1.png\n\n"
    assert len(parse_images(text)) == 2


# -- round trip --------------------------------------------------------------------------------

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def models(draw):
    # cameras and poses are returned as lists, matching read_model's output
    n_cams = draw(st.integers(1, 3))
    cams = []
    for cid in range(1, n_cams + 1):
        w = draw(st.integers(1, 4000))
        h = draw(st.integers(1, 4000))
        fx = draw(st.floats(1e-3, 1e4))
        cx = draw(st.floats(0, w))
        cy = draw(st.floats(0, h))
        if draw(st.booleans()):
            cams.append(CameraIntrinsics(cid, "PINHOLE", w, h, fx, draw(st.floats(1e-3, 1e4)), cx, cy))
        else:
            cams.append(CameraIntrinsics(cid, "SIMPLE_PINHOLE", w, h, fx, fx, cx, cy))
    frames = draw(st.lists(st.integers(0, 10 ** 6), min_size=0, max_size=8, unique=True))
    poses = []
    for k, f in enumerate(frames):
        q = np.array([draw(st.floats(-1, 1)) for _ in range(4)])
        if np.linalg.norm(q) < 1e-3:
            q = np.array([1.0, 0, 0, 0])
        q = rotations.canonicalize(rotations.normalize(q))
        poses.append(PoseRecord(k + 1, tuple(float(v) for v in q),
                                tuple(draw(coord) for _ in range(3)),
                                draw(st.integers(1, n_cams)), f"frame_{f:06d}.png", f))
    return cams, sorted(poses, key=lambda p: p.frame_index)


@given(models())
def test_parse_inverts_write_exactly(model):
    assert read_model(*write_model(*model)) == model


@given(models())
def test_write_parse_write_is_byte_stable(model):
    text = write_model(*model)
    assert write_model(*read_model(*text)) == text


def test_model_dir_round_trip(tmp_path):
    cams = parse_cameras(CAMERAS)
    poses = parse_images(IMAGES)
    write_model_dir(tmp_path / "m", cams, poses)
    assert read_model_dir(tmp_path / "m") == (cams, poses)
