"""Scene manifest: the persisted state of a pipeline run.

The manifest is one JSON document (``"schema": 1``) rewritten atomically on
every change. Paths inside it are relative to the manifest's directory.
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..optim import LossWeights
from ..traj_plan import ExtensionDirective, build_layout
from ..trajectory import Thresholds

SCHEMA = 1

__all__ = [
    "SCHEMA", "ManifestError", "IllegalTransition", "Role", "SegmentStatus", "Segment",
    "SceneManifest", "ManifestWriter", "new_manifest",
]


class ManifestError(ValueError):
    pass


class IllegalTransition(ManifestError):
    def __init__(self, segment_id: str, old: "SegmentStatus", new: "SegmentStatus"):
        super().__init__(f"segment {segment_id}: {old.value} -> {new.value} is not allowed")
        self.segment_id = segment_id


class Role(str, enum.Enum):
    INIT = "Init"
    EXTEND_LEFT = "ExtendLeft"
    EXTEND_RIGHT = "ExtendRight"


class SegmentStatus(str, enum.Enum):
    PENDING = "Pending"
    GENERATED = "Generated"
    POSE_ESTIMATED = "PoseEstimated"
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"
    ACCEPTED = "Accepted"


_FORWARD = {
    SegmentStatus.PENDING: {SegmentStatus.GENERATED},
    SegmentStatus.GENERATED: {SegmentStatus.POSE_ESTIMATED},
    SegmentStatus.POSE_ESTIMATED: {SegmentStatus.NORMAL, SegmentStatus.ABNORMAL},
    SegmentStatus.NORMAL: {SegmentStatus.ACCEPTED},
    SegmentStatus.ABNORMAL: set(),  # only Segment.regenerate leaves Abnormal
    SegmentStatus.ACCEPTED: set(),
}


def _directive_to_json(d: ExtensionDirective | None):
    return None if d is None else {"pitch": d.pitch, "yaw": d.yaw, "advance": d.advance}


def _directive_from_json(obj) -> ExtensionDirective | None:
    return None if obj is None else ExtensionDirective(float(obj["pitch"]), float(obj["yaw"]),
                                                       float(obj["advance"]))


@dataclass
class Segment:
    segment_id: str
    role: Role
    frame_dir: str
    frame_count: int
    seed: int
    directive: ExtensionDirective | None = None
    status: SegmentStatus = SegmentStatus.PENDING
    regenerations: int = 0
    reference_frame: str | None = None

    def advance(self, new: SegmentStatus) -> None:
        if new not in _FORWARD[self.status]:
            raise IllegalTransition(self.segment_id, self.status, new)
        self.status = new

    def regenerate(self) -> None:
        """Abnormal -> Pending with the next seed."""
        if self.status is not SegmentStatus.ABNORMAL:
            raise IllegalTransition(self.segment_id, self.status, SegmentStatus.PENDING)
        self.seed += 1
        self.regenerations += 1
        self.status = SegmentStatus.PENDING

    def to_json(self) -> dict:
        return {
            "segment_id": self.segment_id, "role": self.role.value, "frame_dir": self.frame_dir,
            "frame_count": self.frame_count, "seed": self.seed,
            "directive": _directive_to_json(self.directive), "status": self.status.value,
            "regenerations": self.regenerations, "reference_frame": self.reference_frame,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Segment":
        return cls(obj["segment_id"], Role(obj["role"]), obj["frame_dir"], int(obj["frame_count"]),
                   int(obj["seed"]), _directive_from_json(obj.get("directive")),
                   SegmentStatus(obj["status"]), int(obj.get("regenerations", 0)),
                   obj.get("reference_frame"))


@dataclass
class SceneManifest:
    scene_name: str
    segments: list[Segment]
    n: int
    init_length: int
    extension_length: int
    seed: int = 0
    prompt: str = ""
    pose_model_dir: str = "poses"
    priors_dir: str = "priors"
    weights: LossWeights = field(default_factory=LossWeights)
    thresholds: Thresholds = field(default_factory=Thresholds)
    max_retries: int = 10
    generator: dict[str, Any] = field(default_factory=lambda: {"kind": "SyntheticOracle"})
    poses: dict[str, Any] = field(default_factory=lambda: {"kind": "oracle"})
    reconstruct: dict[str, Any] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    path: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        layout = build_layout(self.n, self.init_length, self.extension_length)
        ids = tuple(s.segment_id for s in self.segments)
        if ids != layout.segment_ids:
            raise ManifestError(f"segments {ids} do not follow the layout {layout.segment_ids}")
        if sum(s.role is Role.INIT for s in self.segments) != 1:
            raise ManifestError("exactly one Init segment is required")
        if self.max_retries < 0:
            raise ManifestError("max_retries must be >= 0")

    @property
    def root(self) -> Path:
        return self.path.parent if self.path is not None else Path(".")

    def resolve(self, rel: str | os.PathLike) -> Path:
        return self.root / rel

    def segment(self, segment_id: str) -> Segment:
        for s in self.segments:
            if s.segment_id == segment_id:
                return s
        raise KeyError(segment_id)

    def layout(self):
        return build_layout(self.n, self.init_length, self.extension_length)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA, "scene_name": self.scene_name, "n": self.n,
            "init_length": self.init_length, "extension_length": self.extension_length,
            "seed": self.seed, "prompt": self.prompt,
            "pose_model_dir": self.pose_model_dir, "priors_dir": self.priors_dir,
            "weights": asdict(self.weights),
            "thresholds": asdict(self.thresholds), "max_retries": self.max_retries,
            "generator": self.generator, "poses": self.poses, "reconstruct": self.reconstruct,
            "outputs": self.outputs,
            "segments": [s.to_json() for s in self.segments],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj: dict, path: Path | None = None) -> "SceneManifest":
        if obj.get("schema") != SCHEMA:
            raise ManifestError(f"unsupported manifest schema {obj.get('schema')!r}")
        return cls(
            scene_name=obj["scene_name"],
            segments=[Segment.from_json(s) for s in obj["segments"]],
            n=int(obj["n"]), init_length=int(obj["init_length"]),
            extension_length=int(obj["extension_length"]), seed=int(obj["seed"]),
            prompt=obj.get("prompt", ""), pose_model_dir=obj["pose_model_dir"],
            priors_dir=obj["priors_dir"], weights=LossWeights(**obj["weights"]),
            thresholds=Thresholds(**obj["thresholds"]), max_retries=int(obj["max_retries"]),
            generator=obj.get("generator", {}), poses=obj.get("poses", {}),
            reconstruct=obj.get("reconstruct", {}), outputs=obj.get("outputs", {}), path=path,
        )

    @classmethod
    def loads(cls, text: str, path: Path | None = None) -> "SceneManifest":
        return cls.from_json(json.loads(text), path)

    @classmethod
    def load(cls, path) -> "SceneManifest":
        path = Path(path)
        return cls.loads(path.read_text(), path)

    def save(self, path=None) -> Path:
        """Atomically replace the manifest file (write to a temp file, then rename)."""
        path = Path(path) if path is not None else self.path
        if path is None:
            raise ManifestError("manifest has no path")
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(self.dumps())
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.path = path
        return path


class ManifestWriter:
    """Serializes segment transitions from worker threads and persists each one."""

    def __init__(self, manifest: SceneManifest, persist: bool = True):
        self.manifest = manifest
        self.persist = persist and manifest.path is not None
        self._lock = threading.Lock()

    def _commit(self) -> None:
        if self.persist:
            self.manifest.save()

    def advance(self, segment: Segment, status: SegmentStatus) -> None:
        with self._lock:
            segment.advance(status)
            self._commit()

    def regenerate(self, segment: Segment) -> None:
        with self._lock:
            segment.regenerate()
            self._commit()

    def update(self, fn) -> None:
        with self._lock:
            fn(self.manifest)
            self._commit()


def new_manifest(scene_name: str, n: int, init_length: int, extension_length: int, seed: int = 0,
                 **kw) -> SceneManifest:
    """Fresh manifest with Pending segments in layout order.

    Segment ``i`` (layout order) starts at seed ``seed + i * (max_retries + 1)``
    so the seed ranges of different segments never overlap.
    """
    max_retries = kw.get("max_retries", 10)
    layout = build_layout(n, init_length, extension_length)
    segments = []
    for i, sid in enumerate(layout.segment_ids):
        role = Role(layout.role(sid))
        segments.append(Segment(sid, role, f"frames/{sid}", layout.length(sid),
                                seed + i * (max_retries + 1)))
    return SceneManifest(scene_name, segments, n, init_length, extension_length, seed, **kw)
