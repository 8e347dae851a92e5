"""Timing comparison between the compiled kernel core and the numpy fallback.

Runs each hot kernel on identical inputs through every available backend and
prints a per-kernel table with the speedup of the compiled core over python.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N] [--scale small|full]

The "small" scale keeps the whole run under a few seconds for CI smoke use;
"full" sizes the workloads like a real reconstruction pass.
"""

import argparse
import time

import numpy as np

from sdfrecon._kernels import available_backends
from sdfrecon.bvh import Bvh
from sdfrecon.shapes import icosphere


def _flat_tree(mesh):
    """Build one BVH and pull out the arrays the raw kernels consume."""
    tree = Bvh(mesh)
    return tree


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(scale):
    rng = np.random.default_rng(0)
    if scale == "full":
        n_rays, n_pts, n_conv, n_tri, n_fps = 200000, 100000, 48, 300000, 1024
        subdiv = 4
    else:
        n_rays, n_pts, n_conv, n_tri, n_fps = 20000, 10000, 16, 30000, 256
        subdiv = 3

    mesh = icosphere(subdiv, 0.4)
    tree = _flat_tree(mesh)

    origins = rng.uniform(-1, 1, (n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    near = rng.uniform(-0.6, 0.6, (n_pts, 3))

    x = rng.normal(size=(8, 24, 24, 24))
    w = rng.normal(size=(n_conv, 8, 3, 3, 3))
    b = rng.normal(size=n_conv)

    grid = rng.normal(size=(64, 64, 64, 16))
    tpts = rng.uniform(-0.45, 0.45, (n_tri, 3))
    origin = np.full(3, -0.5 + 0.5 / 64.0)
    cell = np.full(3, 1.0 / 64.0)

    cloud = rng.uniform(-1, 1, (20000, 3))

    def make(impl):
        v0, e1, e2 = tree.v0, tree.e1, tree.e2
        bounds, left_first, count = tree.bounds, tree.left_first, tree.count
        return {
            "ray_closest": lambda: impl.ray_closest(
                origins, dirs, v0, e1, e2, bounds, left_first, count),
            "ray_parity": lambda: impl.ray_parity(
                near, dirs[: n_pts], v0, e1, e2, bounds, left_first, count),
            "closest_point": lambda: impl.closest_point(
                near, v0, e1, e2, bounds, left_first, count),
            "conv3d": lambda: impl.conv3d(x, w, b, 1, 1),
            "trilinear": lambda: impl.trilinear(grid, tpts, origin, cell),
            "fps": lambda: impl.fps(cloud, n_fps),
        }

    return make


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", choices=("small", "full"), default="small")
    args = ap.parse_args()

    backends = available_backends()
    make = build_cases(args.scale)
    cases = {name: make(impl) for name, impl in backends.items()}
    kernels = list(next(iter(cases.values())))

    timings = {}
    for bname, kern in cases.items():
        for kname in kernels:
            kern[kname]()  # warm up / JIT caches
            timings[(bname, kname)] = _time(kern[kname], args.repeat)

    width = max(len(k) for k in kernels)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"  {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for kname in kernels:
        row = f"{kname:<{width}}  "
        row += "  ".join(f"{timings[(b, kname)] * 1e3:>10.2f}ms" for b in backends)
        if "compiled" in backends and "python" in backends:
            ratio = timings[("python", kname)] / timings[("compiled", kname)]
            row += f"  {ratio:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
