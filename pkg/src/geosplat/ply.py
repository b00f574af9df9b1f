"""Binary little-endian PLY serialization of gaussian scenes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .splat_core import GaussianScene

PROPERTIES = (
    ["x", "y", "z"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
    + ["opacity", "red", "green", "blue"]
)
_DTYPE = np.dtype([(name, "<f4") for name in PROPERTIES])


class PlyError(ValueError):
    pass


def scene_to_bytes(scene: GaussianScene) -> bytes:
    n = len(scene)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in PROPERTIES]
    header.append("end_header")
    data = np.empty(n, dtype=_DTYPE)
    cols = np.concatenate([
        scene.means, scene.log_scales, scene.quats,
        scene.opacity_logits[:, None], scene.colors,
    ], axis=1) if n else np.zeros((0, len(PROPERTIES)))
    for j, name in enumerate(PROPERTIES):
        data[name] = cols[:, j]
    return ("\n".join(header) + "\n").encode("ascii") + data.tobytes()


def scene_from_bytes(blob: bytes) -> GaussianScene:
    marker = b"end_header\n"
    end = blob.find(marker)
    if not blob.startswith(b"ply\n") or end < 0:
        raise PlyError("not a PLY file")
    lines = blob[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise PlyError("only binary_little_endian 1.0 is supported")
    count = None
    props = []
    for line in lines:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts[:1] == ["property"]:
            if parts[1] != "float":
                raise PlyError(f"unsupported property type {parts[1]!r}")
            props.append(parts[2])
    if count is None or props != PROPERTIES:
        raise PlyError("unexpected vertex layout")
    body = blob[end + len(marker):]
    if len(body) != count * _DTYPE.itemsize:
        raise PlyError("vertex data size does not match the header")
    data = np.frombuffer(body, dtype=_DTYPE, count=count)
    col = lambda *names: np.stack([data[n].astype(np.float64) for n in names], axis=1)
    return GaussianScene(
        means=col("x", "y", "z"),
        log_scales=col("scale_0", "scale_1", "scale_2"),
        quats=col("rot_0", "rot_1", "rot_2", "rot_3"),
        opacity_logits=data["opacity"].astype(np.float64),
        colors=col("red", "green", "blue"),
    )


def save_scene(path, scene: GaussianScene) -> None:
    Path(path).write_bytes(scene_to_bytes(scene))


def load_scene(path) -> GaussianScene:
    return scene_from_bytes(Path(path).read_bytes())
