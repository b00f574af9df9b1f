import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geosplat.ply import PlyError, load_scene, save_scene, scene_from_bytes, scene_to_bytes
from factories import random_scene


def as_f32(scene):
    return [np.asarray(getattr(scene, g), np.float32) for g in ("means", "log_scales", "quats",
                                                                "opacity_logits", "colors")]


@given(st.integers(0, 10 ** 6), st.integers(0, 30))
def test_round_trip_exact_at_float32(seed, n):
    scene = random_scene(np.random.default_rng(seed), n)
    back = scene_from_bytes(scene_to_bytes(scene))
    assert len(back) == n
    for a, b in zip(as_f32(scene), as_f32(back)):
        np.testing.assert_array_equal(a, b)
    assert scene_to_bytes(back) == scene_to_bytes(scene)


def test_header_is_standard_3dgs_layout():
    blob = scene_to_bytes(random_scene(np.random.default_rng(0), 2))
    head = blob[:blob.index(b"end_header\n")].decode().splitlines()
    assert head[:3] == ["ply", "format binary_little_endian 1.0", "element vertex 2"]
    assert [ln.split()[2] for ln in head[3:]] == [
        "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
        "opacity", "red", "green", "blue"]


@pytest.mark.parametrize("mutate", [
    lambda b: b"plx" + b[3:],
    lambda b: b.replace(b"binary_little_endian", b"binary_big_endian"),
    lambda b: b.replace(b"property float red", b"property double red"),
    lambda b: b.replace(b"property float red", b"property float r"),
    lambda b: b[:-1],
    lambda b: b.replace(b"end_header\n", b""),
])
def test_corrupt_files(mutate):
    blob = scene_to_bytes(random_scene(np.random.default_rng(0), 3))
    with pytest.raises(PlyError):
        scene_from_bytes(mutate(blob))


def test_file_round_trip(tmp_path):
    s = random_scene(np.random.default_rng(5), 4)
    save_scene(tmp_path / "s.ply", s)
    assert scene_to_bytes(load_scene(tmp_path / "s.ply")) == scene_to_bytes(s)
