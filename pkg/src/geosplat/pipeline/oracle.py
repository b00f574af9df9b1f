"""Synthetic ground-truth generator standing in for the video model.

The oracle owns a seeded room scene. Camera paths follow the fault-free
directive chain: the init segment pans across the room, each extension
starts from the current outermost pose and realizes its directive. A trial
with seed ``s`` injects a step fault with probability ``fault_probability``
using an RNG keyed on ``(scene_seed, s)``, so regenerating a segment with a
new seed is an independent draw.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..colmap_io import write_model_dir
from ..geo_priors import DepthMap, NormalMap, store_prior, stub_estimate
from ..splat_core import CameraPose, GaussianScene, RenderedFrame, render
from ..synthetic import Fault, inject_fault, orbit_trajectory, pinhole, poses_to_records, room_scene
from ..traj_plan import ExtensionDirective, synthesize_trajectory
from ..trajectory import Thresholds, trajectory_deltas
from .adapters import GenerationRequest, frame_name, write_frame

__all__ = ["OracleConfig", "OracleSample", "SyntheticOracle", "synthetic_oracle", "clean_chain",
           "draw_fault", "read_truth", "TRUTH_FILE"]

TRUTH_FILE = "oracle.json"


@dataclass(frozen=True)
class OracleConfig:
    gaussian_count: int = 200
    disk_size: float = 0.35
    width: int = 32
    height: int = 32
    fov_deg: float = 70.0
    scene_seed: int = 0
    fault_probability: float = 0.0
    noise: float = 0.0
    distortion: tuple[float, float] = (1.0, 0.0)
    init_sweep_deg: float = 20.0
    init_radius: float = 0.3
    render_frames: bool = True
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if not 0.0 <= self.fault_probability <= 1.0:
            raise ValueError("fault_probability must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    def to_json(self) -> dict:
        d = asdict(self)
        d["distortion"] = list(self.distortion)
        return d

    @classmethod
    def from_json(cls, obj: Mapping) -> "OracleConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in obj.items() if k in names}
        if "distortion" in kw:
            kw["distortion"] = tuple(float(v) for v in kw["distortion"])
        if "thresholds" in kw and not isinstance(kw["thresholds"], Thresholds):
            kw["thresholds"] = Thresholds(**kw["thresholds"])
        return cls(**kw)


@dataclass
class OracleSample:
    poses: list[CameraPose]
    clean_poses: list[CameraPose]
    frames: list[RenderedFrame]
    depth_priors: list[DepthMap]
    normal_priors: list[NormalMap]
    fault: Fault | None


def _max_steps(poses: Sequence[CameraPose]) -> tuple[float, float]:
    if len(poses) < 2:
        return 0.0, 0.0
    deltas = trajectory_deltas(poses_to_records(poses))
    return (max(d.translation_jump for d in deltas), max(d.rotation_change for d in deltas))


def draw_fault(rng: np.random.Generator, poses: Sequence[CameraPose], probability: float,
               thresholds: Thresholds) -> Fault | None:
    """Random step fault, or ``None`` with probability ``1 - probability``.

    Translation faults move by ``2*T1`` and rotation faults turn by
    ``1.2*T2``, each plus the largest fault-free step of the path so the
    jump into the faulty frame exceeds its threshold whatever the motion.
    """
    if rng.random() >= probability or len(poses) < 2:
        return None
    kind = "translation" if rng.random() < 0.5 else "rotation"
    frame = int(rng.integers(1, len(poses)))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    max_t, max_r = _max_steps(poses)
    magnitude = 2.0 * thresholds.T1 + max_t if kind == "translation" else 1.2 * thresholds.T2 + max_r
    return Fault(kind, frame, float(magnitude), tuple(float(a) for a in axis))


def synthetic_oracle(config: OracleConfig = OracleConfig(), poses: Sequence[CameraPose] | None = None,
                     seed: int = 0, scene: GaussianScene | None = None) -> tuple[GaussianScene, OracleSample]:
    """Ground-truth scene plus one rendered trial along ``poses``.

    ``poses`` defaults to the init pan. The trial's fault draw, prior noise
    and nothing else depend on ``seed``.
    """
    if scene is None:
        scene = room_scene(config.gaussian_count, seed=config.scene_seed, disk_size=config.disk_size)
    if poses is None:
        K = pinhole(config.width, config.height, config.fov_deg)
        poses = orbit_trajectory(K, 8, seed=config.scene_seed, sweep_deg=config.init_sweep_deg,
                                 radius=config.init_radius)
    rng = np.random.default_rng(np.random.SeedSequence([config.scene_seed, seed]))
    clean = list(poses)
    fault = draw_fault(rng, clean, config.fault_probability, config.thresholds)
    actual = inject_fault(clean, fault) if fault is not None else clean
    frames, depths, normals = [], [], []
    if config.render_frames:
        for p in actual:
            f = render(scene, p)
            frames.append(f)
            d, nm = stub_estimate(f.color, f, config.distortion, config.noise, rng)
            depths.append(d)
            normals.append(nm)
    return scene, OracleSample(actual, clean, frames, depths, normals, fault)


def clean_chain(init: Sequence[CameraPose], directives: Mapping[str, ExtensionDirective],
                n: int, extension_length: int) -> dict[str, list[CameraPose]]:
    """Fault-free camera path of every segment, in timeline order.

    A left extension starts at the current leftmost pose and is stored
    reversed so its last frame meets the sequence it extends.
    """
    paths = {"init": list(init)}
    left, right = init[0], init[-1]
    for i in range(1, n + 1):
        lp = synthesize_trajectory(left, directives[f"left_{i}"], extension_length)
        rp = synthesize_trajectory(right, directives[f"right_{i}"], extension_length)
        paths[f"left_{i}"] = lp[::-1]
        paths[f"right_{i}"] = rp
        left, right = lp[-1], rp[-1]
    return paths


class SyntheticOracle:
    """Generator adapter that renders the oracle scene instead of a video model.

    Besides the frames it writes the true (possibly faulted) poses to
    ``sparse/``, depth and normal priors to ``priors/``, and the fault
    bookkeeping to ``oracle.json``.
    """

    kind = "SyntheticOracle"

    def __init__(self, config: OracleConfig, directives: Mapping[str, ExtensionDirective | None],
                 n: int, init_length: int, extension_length: int):
        self.config = config
        self.scene = room_scene(config.gaussian_count, seed=config.scene_seed, disk_size=config.disk_size)
        self.intrinsics = pinhole(config.width, config.height, config.fov_deg)
        init = orbit_trajectory(self.intrinsics, init_length, seed=config.scene_seed,
                                sweep_deg=config.init_sweep_deg, radius=config.init_radius)
        full = {k: (v if v is not None else ExtensionDirective()) for k, v in directives.items()}
        self.paths = clean_chain(init, full, n, extension_length)

    def generate(self, request: GenerationRequest) -> None:
        clean = self.paths[request.segment_id]
        if len(clean) != request.frame_count:
            raise ValueError(f"{request.segment_id}: oracle path has {len(clean)} frames, "
                             f"request wants {request.frame_count}")
        _, sample = synthetic_oracle(self.config, clean, request.seed, self.scene)
        out = Path(request.output_dir)
        if out.exists():
            shutil.rmtree(out)
        (out / "priors").mkdir(parents=True)
        for k, f in enumerate(sample.frames):
            write_frame(out / frame_name(k), f.color)
            store_prior(out / "priors" / f"depth_{k:06d}.wvdm", sample.depth_priors[k])
            store_prior(out / "priors" / f"normal_{k:06d}.wvdm", sample.normal_priors[k])
        write_model_dir(out / "sparse", [self.intrinsics], poses_to_records(sample.poses))
        truth = {"seed": request.seed, "segment_id": request.segment_id,
                 "fault": asdict(sample.fault) if sample.fault else None}
        (out / TRUTH_FILE).write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")

    def ground_truth_views(self) -> list[CameraPose]:
        return [p for sid in sorted(self.paths) for p in self.paths[sid]]


def read_truth(frame_dir) -> dict:
    return json.loads((Path(frame_dir) / TRUTH_FILE).read_text())
