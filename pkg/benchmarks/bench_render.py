"""Forward and backward rasterization time, compiled kernels vs the numpy fallback.

    python benchmarks/bench_render.py [--sizes 32 64 128] [--gaussians 200 1000] [--repeat 5]

Each configuration renders the synthetic room from one orbit pose and
backpropagates a random image-space gradient. Outputs of both backends are
compared before timing.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from geosplat import backend, synthetic
from geosplat.splat_core import RenderConfig, backward, render_with_context


def _time(fn, repeat: int) -> float:
    fn()  # warm-up
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench(size: int, gaussians: int, name: str, repeat: int, threads: int):
    scene = synthetic.room_scene(gaussians, seed=0)
    cam = synthetic.orbit_trajectory(synthetic.pinhole(size), 2, seed=0)[0]
    cfg = RenderConfig(backend=name, threads=threads)
    rng = np.random.default_rng(0)
    g_color = rng.normal(size=(size, size, 3))
    g_depth = rng.normal(size=(size, size))

    def fwd():
        return render_with_context(scene, cam, cfg)

    frame, ctx = fwd()
    t_fwd = _time(fwd, repeat)
    t_bwd = _time(lambda: backward(ctx, g_color, g_depth), repeat)
    return t_fwd, t_bwd, frame, backward(ctx, g_color, g_depth)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    p.add_argument("--gaussians", type=int, nargs="+", default=[200, 1000])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    if backend.compiled_kernels is None:
        print("compiled kernels are not built; only the numpy fallback is available")
        return 1
    print(f"{'size':>5} {'gauss':>6} | {'python fwd':>10} {'compiled':>9} {'x':>6} | "
          f"{'python bwd':>10} {'compiled':>9} {'x':>6} | max diff")
    for size in args.sizes:
        for n in args.gaussians:
            pf, pb, pframe, pgrad = bench(size, n, "python", args.repeat, args.threads)
            cf, cb, cframe, cgrad = bench(size, n, "compiled", args.repeat, args.threads)
            diff = max(float(np.abs(pframe.color - cframe.color).max()),
                       max(float(np.abs(pgrad[k] - cgrad[k]).max()) for k in pgrad))
            print(f"{size:5d} {n:6d} | {pf * 1e3:8.1f}ms {cf * 1e3:7.1f}ms {pf / cf:5.1f}x | "
                  f"{pb * 1e3:8.1f}ms {cb * 1e3:7.1f}ms {pb / cb:5.1f}x | {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
