"""Extension planning: a language-model adapter whose answer is parsed strictly.

Whatever the source, the answer text goes through :func:`parse_plan`, so an
adapter that repeats a directive or breaks the grammar is rejected.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Protocol

from ..traj_plan import ExtensionDirective, format_directive, parse_plan
from .adapters import ExternalCommand
from .manifest import SceneManifest

__all__ = ["Planner", "CannedPlanner", "CommandPlanner", "plan_order", "run_plan"]


class Planner(Protocol):
    def answer(self, prompt: str, count: int) -> str: ...


class CannedPlanner:
    """Offline stand-in returning distinct, gentle directives.

    Left extensions turn left and right extensions turn right by 10 to 25
    degrees with small pitch and advance, so every frame-to-frame step of an
    extension stays well inside the default trajectory thresholds even for
    two-frame segments.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def directives(self, count: int) -> list[ExtensionDirective]:
        out: list[ExtensionDirective] = []
        seen = set()
        for k in range(count):
            side = 1.0 if k % 2 == 0 else -1.0  # plan order alternates left, right
            j = k // 2 + self.seed
            yaw = side * (10.0 + (7 * j) % 16)
            pitch = 4.0 * ((j % 3) - 1)
            advance = 0.05 * (1 + j % 5)
            d = ExtensionDirective(pitch, yaw, advance)
            while (d.pitch, d.yaw, d.advance) in seen:
                d = ExtensionDirective(d.pitch, d.yaw, round(d.advance + 0.01, 10))
            seen.add((d.pitch, d.yaw, d.advance))
            out.append(d)
        return out

    def answer(self, prompt: str, count: int) -> str:
        return "\n".join(f"{i + 1}. {format_directive(d)}" for i, d in enumerate(self.directives(count)))


class CommandPlanner:
    """Planner behind a command template; the answer is the command's stdout.

    ``{input_dir}`` holds ``prompt.txt``; ``{directive}`` expands to the
    number of directives requested.
    """

    def __init__(self, template: str, timeout: float | None = None):
        self.command = ExternalCommand(template, timeout)

    def answer(self, prompt: str, count: int) -> str:
        with tempfile.TemporaryDirectory(prefix="geosplat-plan-") as tmp:
            tmp = Path(tmp)
            (tmp / "prompt.txt").write_text(prompt)
            out = tmp / "out"
            out.mkdir()
            proc = self.command.run("plan", tmp, out, 0, str(count))
        return proc.stdout


def plan_order(n: int) -> list[str]:
    """Extension segments in the order their directives are requested."""
    return [sid for i in range(1, n + 1) for sid in (f"left_{i}", f"right_{i}")]


def run_plan(manifest: SceneManifest, planner: Planner) -> list[ExtensionDirective]:
    """Ask ``planner`` for ``2n`` directives and assign them to the extension segments."""
    order = plan_order(manifest.n)
    if not order:
        return []
    plan = parse_plan(planner.answer(manifest.prompt, len(order)), expected=len(order))
    for sid, d in zip(order, plan):
        manifest.segment(sid).directive = d
    return plan
