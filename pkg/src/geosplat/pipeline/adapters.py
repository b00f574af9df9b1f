"""Contracts with external tools: video generator, pose estimator, planner.

An external tool is a command template. The template is split into words
with shell rules first, then ``{input_dir}``, ``{output_dir}``, ``{seed}`` and
``{directive}`` are replaced verbatim inside each word, so a placeholder that
forms one word stays one argument whatever it expands to. No shell is
involved.
"""

from __future__ import annotations

import json
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from ..colmap_io import CameraIntrinsics, PoseRecord, read_model_dir
from ..traj_plan import ExtensionDirective, format_directive

__all__ = [
    "FRAME_PATTERN", "AdapterFailure", "GenerationRequest", "GeneratorAdapter", "ExternalCommand",
    "ExternalGenerator", "PoseSource", "OraclePoses", "PrecomputedPoses", "ExternalPoses",
    "frame_name", "list_frames", "read_frame", "write_frame", "substitute",
]

FRAME_PATTERN = "frame_{:06d}.png"


class AdapterFailure(RuntimeError):
    def __init__(self, segment: str, detail: str):
        super().__init__(f"segment {segment}: {detail}")
        self.segment = segment
        self.detail = detail


def frame_name(k: int) -> str:
    return FRAME_PATTERN.format(k)


def list_frames(directory: Path) -> list[Path]:
    return sorted(p for p in Path(directory).glob("frame_*.png"))


def read_frame(path) -> np.ndarray:
    """8-bit RGB PNG as float64 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_frame(path, rgb: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def substitute(template: str, **values) -> list[str]:
    words = shlex.split(template)
    out = []
    for w in words:
        for key, val in values.items():
            w = w.replace("{" + key + "}", str(val))
        out.append(w)
    return out


@dataclass(frozen=True)
class GenerationRequest:
    segment_id: str
    role: str
    frame_count: int
    seed: int
    output_dir: Path
    directive: ExtensionDirective | None = None
    reference_frame: Path | None = None
    prompt: str = ""


class GeneratorAdapter(Protocol):
    kind: str

    def generate(self, request: GenerationRequest) -> None:
        """Fill ``request.output_dir`` with ``frame_count`` frames."""


@dataclass(frozen=True)
class ExternalCommand:
    template: str
    timeout: float | None = None

    def run(self, segment: str, input_dir: Path, output_dir: Path, seed: int = 0,
            directive: str = "") -> subprocess.CompletedProcess:
        argv = substitute(self.template, input_dir=input_dir, output_dir=output_dir, seed=seed,
                          directive=directive)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise AdapterFailure(segment, f"cannot run {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-1:] or [""]
            raise AdapterFailure(segment, f"exit status {proc.returncode}: {tail[0]}")
        return proc


class ExternalGenerator:
    """Video generator behind a command template.

    The input directory holds ``request.json`` and, for extensions,
    ``reference.png`` (the boundary frame). The command must leave exactly
    ``frame_count`` PNG frames named ``frame_%06d.png`` in the output
    directory.
    """

    kind = "ExternalCommand"

    def __init__(self, template: str, timeout: float | None = None):
        self.command = ExternalCommand(template, timeout)

    def generate(self, request: GenerationRequest) -> None:
        out = Path(request.output_dir)
        if out.exists():
            shutil.rmtree(out)
        out.mkdir(parents=True)
        directive = format_directive(request.directive) if request.directive else ""
        with tempfile.TemporaryDirectory(prefix="geosplat-gen-") as tmp:
            tmp = Path(tmp)
            if request.reference_frame is not None:
                shutil.copyfile(request.reference_frame, tmp / "reference.png")
            (tmp / "request.json").write_text(json.dumps({
                "segment_id": request.segment_id, "role": request.role,
                "frame_count": request.frame_count, "seed": request.seed,
                "directive": directive, "prompt": request.prompt,
            }, indent=2, sort_keys=True))
            self.command.run(request.segment_id, tmp, out, request.seed, directive)
        expected = [frame_name(k) for k in range(request.frame_count)]
        found = sorted(p.name for p in out.glob("*.png"))
        if found != expected:
            raise AdapterFailure(request.segment_id,
                                 f"expected frames {expected[0]}..{expected[-1]}, found {len(found)} PNGs")
        for name in expected:
            try:
                with Image.open(out / name) as im:
                    im.verify()
            except Exception as exc:  # Pillow raises many types for broken files
                raise AdapterFailure(request.segment_id, f"{name} is not a valid PNG: {exc}") from exc


Model = tuple[list[CameraIntrinsics], list[PoseRecord]]


class PoseSource(Protocol):
    def estimate(self, segment_id: str, frame_dir: Path) -> Model: ...


class OraclePoses:
    """Reads the model the synthetic oracle writes next to its frames."""

    def estimate(self, segment_id: str, frame_dir: Path) -> Model:
        sparse = Path(frame_dir) / "sparse"
        if not sparse.is_dir():
            raise AdapterFailure(segment_id, f"no oracle poses in {sparse}")
        return read_model_dir(sparse)


@dataclass(frozen=True)
class PrecomputedPoses:
    """One COLMAP text model per segment under ``root/<segment_id>``."""

    root: Path

    def estimate(self, segment_id: str, frame_dir: Path) -> Model:
        d = Path(self.root) / segment_id
        if not d.is_dir():
            raise AdapterFailure(segment_id, f"no precomputed model in {d}")
        return read_model_dir(d)


class ExternalPoses:
    """Structure-from-motion behind a command template.

    ``{input_dir}`` is the segment's frame directory; the command writes
    ``cameras.txt`` and ``images.txt`` into ``{output_dir}``.
    """

    def __init__(self, template: str, timeout: float | None = None):
        self.command = ExternalCommand(template, timeout)

    def estimate(self, segment_id: str, frame_dir: Path) -> Model:
        with tempfile.TemporaryDirectory(prefix="geosplat-sfm-") as tmp:
            self.command.run(segment_id, Path(frame_dir), Path(tmp))
            try:
                return read_model_dir(tmp)
            except (OSError, ValueError) as exc:
                raise AdapterFailure(segment_id, f"unusable pose model: {exc}") from exc
