"""Reading and writing COLMAP sparse models in the text format.

Only ``cameras.txt`` and ``images.txt`` are handled; ``points3D.txt`` and the
binary format are left to external tools.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rotations

SUPPORTED_MODELS = {"PINHOLE": 4, "SIMPLE_PINHOLE": 3}

# Below this deviation a quaternion already satisfies the unit invariant and
# is kept verbatim, which keeps write -> parse -> write byte-stable.
UNIT_TOLERANCE = 1e-9
RENORMALIZE_TOLERANCE = 1e-6


class ColmapError(ValueError):
    pass


class MalformedLine(ColmapError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"line {line_no}: {detail}" if detail else f"line {line_no}")


class UnsupportedModel(ColmapError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unsupported camera model {name!r}")


class NonUnitQuaternion(ColmapError):
    def __init__(self, image_id: int, norm: float):
        self.image_id = image_id
        self.norm = norm
        super().__init__(f"image {image_id}: quaternion norm {norm:.9g}")


class DuplicateImageId(ColmapError):
    def __init__(self, image_id: int):
        self.image_id = image_id
        super().__init__(f"duplicate image id {image_id}")


class DuplicateFrameIndex(ColmapError):
    def __init__(self, frame_index: int):
        self.frame_index = frame_index
        super().__init__(f"two images map to frame index {frame_index}")


class MissingFrameIndex(ColmapError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"image name {name!r} carries no frame number")


class UnresolvedCamera(ColmapError):
    def __init__(self, image_id: int, camera_id: int):
        self.image_id = image_id
        self.camera_id = camera_id
        super().__init__(f"image {image_id} references unknown camera {camera_id}")


@dataclass(frozen=True)
class CameraIntrinsics:
    camera_id: int
    model_name: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self) -> None:
        if self.model_name not in SUPPORTED_MODELS:
            raise UnsupportedModel(self.model_name)
        if self.camera_id <= 0:
            raise ValueError("camera_id must be positive")
        if self.width <= 0 or self.height <= 0 or self.fx <= 0 or self.fy <= 0:
            raise ValueError("image size and focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside the image")
        if self.model_name == "SIMPLE_PINHOLE" and self.fx != self.fy:
            raise ValueError("SIMPLE_PINHOLE requires fx == fy")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class PoseRecord:
    """World-to-camera pose of one registered image."""

    image_id: int
    q: tuple[float, float, float, float]
    t: tuple[float, float, float]
    camera_id: int
    image_name: str
    frame_index: int

    @property
    def rotation(self) -> np.ndarray:
        return rotations.to_matrix(np.array(self.q))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ np.array(self.t)


_TRAILING_DIGITS = re.compile(r"(\d+)(?!.*\d)")


def frame_index_from_name(name: str) -> int:
    """Frame number taken from the last run of digits in the file stem."""
    stem = name.rsplit("/", 1)[-1]
    if "." in stem:
        stem = stem.rsplit(".", 1)[0]
    m = _TRAILING_DIGITS.search(stem)
    if m is None:
        raise MissingFrameIndex(name)
    return int(m.group(1))


def _content_lines(text: str):
    for line_no, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith("#"):
            continue
        yield line_no, line


def _parse_float(tok: str, line_no: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise MalformedLine(line_no, f"not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise MalformedLine(line_no, f"non-finite value {tok!r}")
    return v


def _parse_int(tok: str, line_no: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise MalformedLine(line_no, f"not an integer: {tok!r}") from None


def parse_cameras(text: str) -> list[CameraIntrinsics]:
    cameras = []
    for line_no, line in _content_lines(text):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 4:
            raise MalformedLine(line_no, "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]")
        model = tokens[1]
        if model not in SUPPORTED_MODELS:
            raise UnsupportedModel(model)
        n_params = SUPPORTED_MODELS[model]
        if len(tokens) != 4 + n_params:
            raise MalformedLine(line_no, f"{model} takes {n_params} parameters")
        camera_id = _parse_int(tokens[0], line_no)
        width = _parse_int(tokens[2], line_no)
        height = _parse_int(tokens[3], line_no)
        params = [_parse_float(tok, line_no) for tok in tokens[4:]]
        if model == "PINHOLE":
            fx, fy, cx, cy = params
        else:
            fx, cx, cy = params
            fy = fx
        cam = CameraIntrinsics(camera_id, model, width, height, fx, fy, cx, cy)
        try:
            cam.validate()
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        cameras.append(cam)
    return cameras


def parse_images(text: str) -> list[PoseRecord]:
    """Parse ``images.txt``; the result is sorted by frame index.

    Each image occupies two lines. The second (2D observations) may be empty
    and is not interpreted.
    """
    records = []
    seen_ids: set[int] = set()
    expect_points = False
    for line_no, line in _content_lines(text):
        if expect_points:
            expect_points = False
            continue
        tokens = line.split()
        if not tokens:
            # blank line where an image line is expected: tolerated only as padding
            continue
        if len(tokens) != 10:
            raise MalformedLine(line_no, "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME")
        image_id = _parse_int(tokens[0], line_no)
        q = np.array([_parse_float(tok, line_no) for tok in tokens[1:5]])
        t = tuple(_parse_float(tok, line_no) for tok in tokens[5:8])
        camera_id = _parse_int(tokens[8], line_no)
        name = tokens[9]
        if image_id <= 0:
            raise MalformedLine(line_no, "image id must be positive")
        if image_id in seen_ids:
            raise DuplicateImageId(image_id)
        seen_ids.add(image_id)
        norm = float(np.linalg.norm(q))
        deviation = abs(norm - 1.0)
        if deviation > RENORMALIZE_TOLERANCE:
            raise NonUnitQuaternion(image_id, norm)
        if deviation > UNIT_TOLERANCE:
            q = q / norm
        q = rotations.canonicalize(q)
        records.append(PoseRecord(
            image_id=image_id,
            q=tuple(float(v) for v in q),
            t=t,
            camera_id=camera_id,
            image_name=name,
            frame_index=frame_index_from_name(name),
        ))
        expect_points = True
    records.sort(key=lambda r: r.frame_index)
    for a, b in zip(records, records[1:]):
        if a.frame_index == b.frame_index:
            raise DuplicateFrameIndex(a.frame_index)
    return records


def _fmt(v: float) -> str:
    # shortest text that parses back to the same double
    return repr(float(v))


def write_model(cameras, poses) -> tuple[str, str]:
    """Serialize cameras and poses to ``(cameras_text, images_text)``."""
    cam_lines = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(cameras)}",
    ]
    for cam in cameras:
        cam.validate()
        if cam.model_name == "PINHOLE":
            params = [cam.fx, cam.fy, cam.cx, cam.cy]
        else:
            params = [cam.fx, cam.cx, cam.cy]
        cam_lines.append(" ".join(
            [str(cam.camera_id), cam.model_name, str(cam.width), str(cam.height)]
            + [_fmt(p) for p in params]))

    img_lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(poses)}, mean observations per image: 0",
    ]
    for p in poses:
        fields = [str(p.image_id)] + [_fmt(v) for v in p.q] + [_fmt(v) for v in p.t]
        fields += [str(p.camera_id), p.image_name]
        img_lines.append(" ".join(fields))
        img_lines.append("")
    return "\n".join(cam_lines) + "\n", "\n".join(img_lines) + "\n"


def read_model(cameras_text: str, images_text: str):
    """Parse both files and check that every image's camera resolves."""
    cameras = parse_cameras(cameras_text)
    poses = parse_images(images_text)
    ids = {c.camera_id for c in cameras}
    for p in poses:
        if p.camera_id not in ids:
            raise UnresolvedCamera(p.image_id, p.camera_id)
    return cameras, poses


def read_model_dir(path) -> tuple[list[CameraIntrinsics], list[PoseRecord]]:
    path = Path(path)
    return read_model((path / "cameras.txt").read_text(), (path / "images.txt").read_text())


def write_model_dir(path, cameras, poses) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cam_text, img_text = write_model(cameras, poses)
    (path / "cameras.txt").write_text(cam_text)
    (path / "images.txt").write_text(img_text)
