"""Pipeline stages operating on a :class:`SceneManifest`.

Order: plan, generate, QA (pose estimation plus trajectory checks with
regeneration), reconstruct, render, export. Every stage reads and writes
the manifest; segment status changes go through a :class:`ManifestWriter`.
"""

from __future__ import annotations

import enum
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..colmap_io import PoseRecord, read_model_dir, write_model_dir
from ..geo_priors import DepthMap, Direction, NormalMap, load_prior, store_prior
from ..optim import FrameBundle, OptimizeConfig, optimize, trace_to_csv
from ..ply import load_scene, save_scene
from ..scene_init import init_from_depth, init_random
from ..splat_core import CameraPose, GaussianScene, RenderConfig, render
from ..trajectory import Status, TooShort, coverage_check, detect_abnormal
from .adapters import (AdapterFailure, ExternalGenerator, ExternalPoses,
                       GenerationRequest, GeneratorAdapter, OraclePoses, PoseSource,
                       PrecomputedPoses, frame_name, read_frame, write_frame)
from .manifest import ManifestWriter, Role, SceneManifest, Segment, SegmentStatus
from .oracle import OracleConfig, SyntheticOracle

__all__ = [
    "PreconditionError", "RetriesExhausted", "MissingInputs", "RetryStats", "ExportTarget",
    "ReconstructConfig", "make_generator", "make_pose_source", "generation_order", "run_generate",
    "run_qa_loop", "run_reconstruct", "render_manifest", "run_export", "accepted_views", "View",
]


class PreconditionError(RuntimeError):
    pass


class RetriesExhausted(RuntimeError):
    def __init__(self, segment: str, segments: list[str] | None = None):
        self.segment = segment
        self.segments = segments or [segment]
        super().__init__(f"segment {segment} still abnormal after the last allowed regeneration"
                         + (f" ({len(self.segments)} segments exhausted)" if len(self.segments) > 1 else ""))


class MissingInputs(RuntimeError):
    pass


@dataclass
class RetryStats:
    segments_total: int = 0
    regenerations_total: int = 0

    @property
    def mean_extra_trials(self) -> float:
        return self.regenerations_total / self.segments_total if self.segments_total else 0.0

    def __add__(self, other: "RetryStats") -> "RetryStats":
        return RetryStats(self.segments_total + other.segments_total,
                          self.regenerations_total + other.regenerations_total)


class ExportTarget(str, enum.Enum):
    POSED_IMAGES = "PosedImages"
    PLY = "PLY"


# -- adapters from manifest configuration ----------------------------------------------------

def make_generator(manifest: SceneManifest) -> GeneratorAdapter:
    cfg = dict(manifest.generator)
    kind = cfg.pop("kind", "SyntheticOracle")
    if kind == "SyntheticOracle":
        cfg.setdefault("thresholds", manifest.thresholds)
        directives = {s.segment_id: s.directive for s in manifest.segments if s.role is not Role.INIT}
        return SyntheticOracle(OracleConfig.from_json(cfg), directives, manifest.n,
                               manifest.init_length, manifest.extension_length)
    if kind == "ExternalCommand":
        return ExternalGenerator(cfg["command"], cfg.get("timeout"))
    raise ValueError(f"unknown generator kind {kind!r}")


def make_pose_source(manifest: SceneManifest) -> PoseSource:
    cfg = manifest.poses
    kind = cfg.get("kind", "oracle")
    if kind == "oracle":
        return OraclePoses()
    if kind == "precomputed":
        return PrecomputedPoses(manifest.resolve(cfg["dir"]))
    if kind == "external":
        return ExternalPoses(cfg["command"], cfg.get("timeout"))
    raise ValueError(f"unknown pose source kind {kind!r}")


# -- generation ----------------------------------------------------------------------------

def generation_order(n: int) -> list[str]:
    """Init first, then each iteration's left and right extension."""
    return ["init"] + [sid for i in range(1, n + 1) for sid in (f"left_{i}", f"right_{i}")]


def _reference_frame(manifest: SceneManifest, seg: Segment) -> str | None:
    """Boundary frame an extension starts from, relative to the manifest root.

    Left extensions get the first frame of the current leftmost segment and
    right extensions the last frame of the current rightmost one.
    """
    if seg.role is Role.INIT:
        return None
    i = int(seg.segment_id.rsplit("_", 1)[1])
    side = "left" if seg.role is Role.EXTEND_LEFT else "right"
    inner = manifest.segment("init" if i == 1 else f"{side}_{i - 1}")
    k = 0 if side == "left" else inner.frame_count - 1
    return f"{inner.frame_dir}/{frame_name(k)}"


def _request(manifest: SceneManifest, seg: Segment) -> GenerationRequest:
    ref = seg.reference_frame
    return GenerationRequest(seg.segment_id, seg.role.value, seg.frame_count, seg.seed,
                             manifest.resolve(seg.frame_dir), seg.directive,
                             manifest.resolve(ref) if ref else None, manifest.prompt)


def _generate(manifest: SceneManifest, seg: Segment, adapter: GeneratorAdapter,
              writer: ManifestWriter) -> None:
    try:
        adapter.generate(_request(manifest, seg))
    except AdapterFailure:
        raise
    except Exception as exc:
        raise AdapterFailure(seg.segment_id, str(exc)) from exc
    writer.advance(seg, SegmentStatus.GENERATED)


def run_generate(manifest: SceneManifest, adapter: GeneratorAdapter | None = None,
                 writer: ManifestWriter | None = None) -> SceneManifest:
    """Generate every Pending segment, init first, extensions outward."""
    adapter = adapter if adapter is not None else make_generator(manifest)
    writer = writer if writer is not None else ManifestWriter(manifest)
    for sid in generation_order(manifest.n):
        seg = manifest.segment(sid)
        if seg.role is not Role.INIT and seg.directive is None:
            raise PreconditionError(f"segment {sid} has no directive; run the planner first")
        if seg.status is not SegmentStatus.PENDING:
            continue
        ref = _reference_frame(manifest, seg)
        if ref is not None and not manifest.resolve(ref).exists():
            raise PreconditionError(f"segment {sid}: boundary frame {ref} does not exist")
        writer.update(lambda m, s=seg, r=ref: setattr(s, "reference_frame", r))
        _generate(manifest, seg, adapter, writer)
    return manifest


# -- QA loop -------------------------------------------------------------------------------

def _verdict(manifest: SceneManifest, seg: Segment, poses: list[PoseRecord]) -> Status:
    missing = coverage_check(poses, seg.frame_count) if len(poses) <= seg.frame_count else [0]
    if missing:
        return Status.ABNORMAL
    try:
        return detect_abnormal(poses, manifest.thresholds, seg.segment_id).status
    except TooShort:
        return Status.ABNORMAL


def _qa_segment(manifest: SceneManifest, seg: Segment, adapter: GeneratorAdapter,
                poses: PoseSource, writer: ManifestWriter) -> None:
    """Drive one segment to Accepted, regenerating with seed + 1 while abnormal."""
    model = None
    while seg.status is not SegmentStatus.ACCEPTED:
        st = seg.status
        if st is SegmentStatus.PENDING:
            _generate(manifest, seg, adapter, writer)
        elif st is SegmentStatus.GENERATED:
            model = poses.estimate(seg.segment_id, manifest.resolve(seg.frame_dir))
            writer.advance(seg, SegmentStatus.POSE_ESTIMATED)
        elif st is SegmentStatus.POSE_ESTIMATED:
            if model is None:  # resumed run
                model = poses.estimate(seg.segment_id, manifest.resolve(seg.frame_dir))
            verdict = _verdict(manifest, seg, model[1])
            writer.advance(seg, SegmentStatus.NORMAL if verdict is Status.NORMAL else SegmentStatus.ABNORMAL)
        elif st is SegmentStatus.NORMAL:
            if model is None:
                model = poses.estimate(seg.segment_id, manifest.resolve(seg.frame_dir))
            _ingest(manifest, seg, model)
            writer.advance(seg, SegmentStatus.ACCEPTED)
        elif st is SegmentStatus.ABNORMAL:
            if seg.regenerations >= manifest.max_retries:
                raise RetriesExhausted(seg.segment_id)
            model = None
            writer.regenerate(seg)


def _ingest(manifest: SceneManifest, seg: Segment, model) -> None:
    """Copy the accepted pose model and any generator-supplied priors into place."""
    cameras, poses = model
    write_model_dir(manifest.resolve(manifest.pose_model_dir) / seg.segment_id, cameras, poses)
    src = manifest.resolve(seg.frame_dir) / "priors"
    dst = manifest.resolve(manifest.priors_dir) / seg.segment_id
    if src.is_dir():
        if dst.exists():
            shutil.rmtree(dst)
        shutil.copytree(src, dst)


def run_qa_loop(manifest: SceneManifest, adapter: GeneratorAdapter | None = None,
                poses_source: PoseSource | None = None, threads: int = 1,
                writer: ManifestWriter | None = None) -> tuple[SceneManifest, RetryStats]:
    """Estimate poses, judge each segment, regenerate abnormal ones until accepted.

    Segments run on a pool of ``threads`` workers; transitions are serialized
    by one writer. After ``max_retries`` regenerations a further abnormal
    verdict raises :class:`RetriesExhausted` (once all workers finish).
    """
    adapter = adapter if adapter is not None else make_generator(manifest)
    poses_source = poses_source if poses_source is not None else make_pose_source(manifest)
    writer = writer if writer is not None else ManifestWriter(manifest)
    start = {s.segment_id: s.regenerations for s in manifest.segments}
    errors: dict[str, BaseException] = {}

    def work(seg: Segment):
        try:
            _qa_segment(manifest, seg, adapter, poses_source, writer)
        except BaseException as exc:  # reported after the pool drains
            errors[seg.segment_id] = exc

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(work, manifest.segments))
    if errors:
        order = [s.segment_id for s in manifest.segments if s.segment_id in errors]
        exhausted = [sid for sid in order if isinstance(errors[sid], RetriesExhausted)]
        if len(exhausted) == len(order):
            raise RetriesExhausted(exhausted[0], exhausted)
        raise errors[order[0]]
    stats = RetryStats(len(manifest.segments),
                       sum(s.regenerations - start[s.segment_id] for s in manifest.segments))
    return manifest, stats


# -- reconstruction ------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructConfig:
    iterations: int = 300
    gaussians: int = 200
    view_stride: int = 1
    init: str = "depth"  # or "random"
    direction: str = Direction.PRIOR_TO_RENDER.value
    threads: int = 1
    output_dir: str = "recon"

    @classmethod
    def from_json(cls, obj: dict) -> "ReconstructConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class View:
    segment_id: str
    frame: int
    cam: CameraPose
    image_path: Path
    depth: DepthMap | None
    normal: NormalMap | None


def accepted_views(manifest: SceneManifest, with_priors: bool = True) -> list[View]:
    """Every posed frame of every segment, in timeline order."""
    views = []
    for seg in manifest.segments:
        if seg.status is not SegmentStatus.ACCEPTED:
            raise PreconditionError(f"segment {seg.segment_id} is {seg.status.value}, not Accepted")
        cameras, poses = read_model_dir(manifest.resolve(manifest.pose_model_dir) / seg.segment_id)
        intr = {c.camera_id: c for c in cameras}
        pdir = manifest.resolve(manifest.priors_dir) / seg.segment_id
        for p in poses:
            depth = normal = None
            if with_priors:
                dpath = pdir / f"depth_{p.frame_index:06d}.wvdm"
                npath = pdir / f"normal_{p.frame_index:06d}.wvdm"
                depth = load_prior(dpath) if dpath.exists() else None
                normal = load_prior(npath) if npath.exists() else None
            views.append(View(seg.segment_id, p.frame_index,
                              CameraPose.from_pose_record(p, intr[p.camera_id]),
                              manifest.resolve(seg.frame_dir) / p.image_name, depth, normal))
    return views


def _write_render(out: Path, stem: str, scene: GaussianScene, cam: CameraPose, config: RenderConfig):
    f = render(scene, cam, config)
    write_frame(out / f"{stem}_rgb.png", f.color)
    store_prior(out / f"{stem}_depth.wvdm", DepthMap(f.depth.astype(np.float32)))
    store_prior(out / f"{stem}_normal.wvdm", NormalMap(f.normal.astype(np.float32)))


def run_reconstruct(manifest: SceneManifest, config: ReconstructConfig | None = None,
                    writer: ManifestWriter | None = None) -> dict[str, str]:
    """Optimize a scene over all accepted frames; write PLY, loss trace and previews."""
    config = config if config is not None else ReconstructConfig.from_json(manifest.reconstruct)
    writer = writer if writer is not None else ManifestWriter(manifest)
    views = accepted_views(manifest)[::max(1, config.view_stride)]
    if not views:
        raise PreconditionError("no posed frames to reconstruct from")
    cams = [v.cam for v in views]
    images = [read_frame(v.image_path) for v in views]
    bundles = [FrameBundle(img, v.depth, v.normal) for img, v in zip(images, views)]
    if config.init == "depth" and any(v.depth is not None for v in views):
        init = init_from_depth(cams, images, [v.depth for v in views], [v.normal for v in views],
                               config.gaussians)
    else:
        init = init_random(cams, config.gaussians, seed=manifest.seed)
    render_cfg = RenderConfig(threads=config.threads)
    opt = OptimizeConfig(iterations=config.iterations, weights=manifest.weights, render=render_cfg,
                         direction=Direction(config.direction))
    result = optimize(init, bundles, cams, opt)

    out = manifest.resolve(config.output_dir)
    (out / "renders").mkdir(parents=True, exist_ok=True)
    save_scene(out / "scene.ply", result.scene)
    (out / "loss_trace.csv").write_text(trace_to_csv(result.trace))
    for v in views:
        _write_render(out / "renders", f"{v.segment_id}_{v.frame:06d}", result.scene, v.cam, render_cfg)
    rel = Path(config.output_dir)
    outputs = {"scene": str(rel / "scene.ply"), "trace": str(rel / "loss_trace.csv"),
               "renders": str(rel / "renders")}
    writer.update(lambda m: m.outputs.update(outputs))
    return outputs


def render_manifest(manifest: SceneManifest, scene_path, out_dir, threads: int = 1) -> int:
    """Render ``scene_path`` from every accepted pose into ``out_dir``; returns the view count."""
    scene = load_scene(scene_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = accepted_views(manifest, with_priors=False)
    cfg = RenderConfig(threads=threads)
    for v in views:
        _write_render(out, f"{v.segment_id}_{v.frame:06d}", scene, v.cam, cfg)
    return len(views)


# -- export --------------------------------------------------------------------------------

def run_export(manifest: SceneManifest, target: ExportTarget | str, out_dir) -> Path:
    """``PosedImages``: timeline-ordered frames plus a COLMAP text model.
    ``PLY``: the reconstructed scene."""
    target = ExportTarget(target)
    out = Path(out_dir)
    if target is ExportTarget.POSED_IMAGES:
        pending = [s.segment_id for s in manifest.segments if s.status is not SegmentStatus.ACCEPTED]
        if pending:
            raise MissingInputs(f"segments not accepted yet: {', '.join(pending)}")
        views = accepted_views(manifest, with_priors=False)
        (out / "images").mkdir(parents=True, exist_ok=True)
        cameras, records = {}, []
        for k, v in enumerate(views):
            name = frame_name(k)
            shutil.copyfile(v.image_path, out / "images" / name)
            intr = v.cam.intrinsics
            cameras.setdefault(intr.camera_id, intr)
            records.append(v.cam.to_pose_record(k + 1, name, k))
        write_model_dir(out / "sparse", list(cameras.values()), records)
        return out
    scene_rel = manifest.outputs.get("scene")
    if not scene_rel or not manifest.resolve(scene_rel).exists():
        raise MissingInputs("no reconstructed scene; run reconstruct first")
    out.mkdir(parents=True, exist_ok=True)
    dst = out / "scene.ply"
    shutil.copyfile(manifest.resolve(scene_rel), dst)
    load_scene(dst)  # the copy must parse
    return out
