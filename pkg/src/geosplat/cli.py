"""Command-line entry point: ``geosplat <subcommand> --manifest PATH ...``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import backend
from .geo_priors import stub_estimate
from .optim import FrameBundle, LossWeights, gradcheck
from .pipeline import (CannedPlanner, CommandPlanner, ExportTarget, ReconstructConfig, SceneManifest,
                       new_manifest, render_manifest, run_export, run_generate, run_plan, run_qa_loop,
                       run_reconstruct)
from .pipeline.oracle import OracleConfig
from .splat_core import CameraPose, GaussianScene, render
from .synthetic import pinhole


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _manifest(args) -> SceneManifest:
    if not args.manifest:
        raise SystemExit("--manifest is required for this command")
    return SceneManifest.load(args.manifest)


def cmd_oracle(args, cfg: dict) -> int:
    """Create a manifest driven by the synthetic oracle, optionally running every stage."""
    oracle = OracleConfig.from_json({**cfg.get("oracle", {}), **{
        k: v for k, v in {"gaussian_count": args.gaussians, "width": args.width, "height": args.width,
                          "fault_probability": args.fault_probability, "noise": args.noise,
                          "scene_seed": args.seed}.items() if v is not None}})
    gen = {"kind": "SyntheticOracle", **oracle.to_json()}
    gen.pop("thresholds")
    m = new_manifest(args.scene_name, args.n, args.frames, args.extension_frames, seed=args.seed,
                     max_retries=args.max_retries, generator=gen, poses={"kind": "oracle"},
                     reconstruct={**cfg.get("reconstruct", {}),
                                  **({"iterations": args.iterations} if args.iterations is not None else {})},
                     prompt=args.prompt)
    m.save(args.manifest)
    print(f"wrote {args.manifest} ({len(m.segments)} segments)")
    if args.run:
        run_plan(m, CannedPlanner(args.seed))
        m.save()
        run_generate(m)
        _, stats = run_qa_loop(m, threads=args.threads)
        print(f"qa: {stats.segments_total} segments, {stats.regenerations_total} regenerations")
        out = run_reconstruct(m, _recon_config(m, args))
        print(f"reconstruct: {out['scene']}")
    return 0


def cmd_plan(args, cfg: dict) -> int:
    m = _manifest(args)
    planner = CommandPlanner(args.command) if args.command else CannedPlanner(args.seed or 0)
    plan = run_plan(m, planner)
    m.save()
    for seg_id, d in zip([s.segment_id for s in m.segments if s.directive is not None], plan):
        print(seg_id, d)
    return 0


def cmd_generate(args, cfg: dict) -> int:
    m = _manifest(args)
    run_generate(m)
    print(f"generated {sum(1 for s in m.segments if s.status.value != 'Pending')} segments")
    return 0


def cmd_qa(args, cfg: dict) -> int:
    m = _manifest(args)
    _, stats = run_qa_loop(m, threads=args.threads)
    print(f"segments {stats.segments_total} regenerations {stats.regenerations_total} "
          f"mean_extra_trials {stats.mean_extra_trials:.4f}")
    return 0


def _recon_config(m: SceneManifest, args) -> ReconstructConfig:
    raw = dict(m.reconstruct)
    if getattr(args, "iterations", None) is not None:
        raw["iterations"] = args.iterations
    raw["threads"] = args.threads
    return ReconstructConfig.from_json(raw)


def cmd_reconstruct(args, cfg: dict) -> int:
    m = _manifest(args)
    if cfg.get("reconstruct"):
        m.reconstruct.update(cfg["reconstruct"])
    out = run_reconstruct(m, _recon_config(m, args))
    for k, v in out.items():
        print(f"{k}: {v}")
    return 0


def cmd_render(args, cfg: dict) -> int:
    m = _manifest(args)
    scene = args.scene or m.outputs.get("scene")
    if not scene:
        raise SystemExit("no scene given and the manifest has no reconstruction")
    count = render_manifest(m, m.resolve(scene) if not Path(scene).is_absolute() else scene,
                            args.out, threads=args.threads)
    print(f"rendered {count} views into {args.out}")
    return 0


def cmd_export(args, cfg: dict) -> int:
    m = _manifest(args)
    out = run_export(m, ExportTarget(args.target), args.out)
    print(f"exported {args.target} to {out}")
    return 0


def _random_scene(rng: np.random.Generator, n: int) -> GaussianScene:
    return GaussianScene(
        means=np.c_[rng.uniform(-1, 1, (n, 2)), rng.uniform(3, 6, n)],
        log_scales=np.log(rng.uniform(0.1, 0.6, (n, 3))),
        quats=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-1, 2, n),
        colors=rng.uniform(0, 1, (n, 3)))


def cmd_gradcheck(args, cfg: dict) -> int:
    """Finite-difference check of the full objective on random small scenes."""
    rng = np.random.default_rng(args.seed or 0)
    intr = pinhole(args.size, fov_deg=2 * np.degrees(np.arctan(0.4)))
    cam = CameraPose((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), intr)
    worst = {}
    t0 = time.perf_counter()
    ok = True
    for _ in range(args.scenes):
        scene = _random_scene(rng, args.gaussians)
        prior_frame = render(_random_scene(rng, args.gaussians), cam)
        depth, normal = stub_estimate(prior_frame.color, prior_frame, distortion=(0.7, 0.3))
        bundle = FrameBundle(rng.uniform(0, 1, (args.size, args.size, 3)), depth, normal)
        rep = gradcheck(scene, cam, bundle, LossWeights(), h=args.h, tolerance=args.tolerance)
        ok &= rep.passed
        for g, e in rep.max_rel_error.items():
            worst[g] = max(worst.get(g, 0.0), e)
        if rep.precision_regime:
            print(f"warning: h={args.h:g} is in the round-off dominated regime")
    for g, e in worst.items():
        print(f"{g:16s} max rel err {e:.3e} {'ok' if e < args.tolerance else 'FAIL'}")
    print(f"{args.scenes} scenes in {time.perf_counter() - t0:.1f} s (backend: {backend.NAME})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geosplat", description=__doc__)
    p.add_argument("--manifest", help="scene manifest JSON")
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--config", help="JSON file with 'oracle' and 'reconstruct' option blocks")
    sub = p.add_subparsers(dest="command_name", required=True)

    o = sub.add_parser("oracle", help="create a synthetic-oracle manifest")
    o.add_argument("--scene-name", default="room")
    o.add_argument("--n", type=int, default=1, help="extension iterations")
    o.add_argument("--frames", type=int, default=8, help="init segment length T")
    o.add_argument("--extension-frames", type=int, default=4, help="extension length T'")
    o.add_argument("--width", type=int, default=None)
    o.add_argument("--gaussians", type=int, default=None)
    o.add_argument("--fault-probability", type=float, default=None)
    o.add_argument("--noise", type=float, default=None)
    o.add_argument("--max-retries", type=int, default=10)
    o.add_argument("--iterations", type=int, default=None)
    o.add_argument("--prompt", default="")
    o.add_argument("--run", action="store_true", help="also plan, generate, QA and reconstruct")
    o.set_defaults(fn=cmd_oracle)

    pl = sub.add_parser("plan", help="assign extension directives from a planner")
    pl.add_argument("--command", help="planner command template (default: offline canned plans)")
    pl.set_defaults(fn=cmd_plan)

    sub.add_parser("generate", help="generate all pending segments").set_defaults(fn=cmd_generate)
    sub.add_parser("qa", help="pose QA with regeneration").set_defaults(fn=cmd_qa)

    r = sub.add_parser("reconstruct", help="optimize a scene over accepted frames")
    r.add_argument("--iterations", type=int, default=None)
    r.set_defaults(fn=cmd_reconstruct)

    rd = sub.add_parser("render", help="render a scene from every accepted pose")
    rd.add_argument("--scene", help="PLY file (default: the manifest's reconstruction)")
    rd.add_argument("--out", required=True)
    rd.set_defaults(fn=cmd_render)

    e = sub.add_parser("export", help="export posed images or the scene PLY")
    e.add_argument("--target", choices=[t.value for t in ExportTarget], required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_export)

    g = sub.add_parser("gradcheck", help="finite-difference gradient check on random scenes")
    g.add_argument("--scenes", type=int, default=20)
    g.add_argument("--gaussians", type=int, default=10)
    g.add_argument("--size", type=int, default=16)
    g.add_argument("--h", type=float, default=1e-4)
    g.add_argument("--tolerance", type=float, default=2e-3)
    g.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command_name == "oracle":
        if not args.manifest:
            raise SystemExit("--manifest is required for this command")
        if args.seed is None:
            args.seed = 0
    cfg = _load_config(args.config)
    try:
        return args.fn(args, cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
