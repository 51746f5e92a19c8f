"""Render timing: compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--repeats 20] [--size 128]

Renders the default scene at a fixed set of view angles with each backend,
checks the images agree bit for bit, and prints per-render wall time.
"""

import argparse
import time

import numpy as np

from sarinv import _pykernels, kernels
from sarinv.geometry import ViewAngles
from sarinv.renderer import RenderConfig, default_scene, render

KERNELS = ("rasterize_min_depth", "deposit", "image_span")


def time_renders(scene, angles, cfg, repeats):
    best = np.inf
    images = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        images = [render(scene, a, cfg).intensity for a in angles]
        best = min(best, (time.perf_counter() - t0) / len(angles))
    return best, images


def use_backend(module):
    for name in KERNELS:
        setattr(kernels, name, getattr(module, name))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--size", type=int, default=128)
    args = p.parse_args(argv)

    scene = default_scene()
    cfg = RenderConfig(image_size=args.size)
    rng = np.random.default_rng(0)
    angles = [ViewAngles(a, b) for a, b in zip(rng.uniform(30, 75, 8), rng.uniform(0, 360, 8))]
    compiled = {name: getattr(kernels, name) for name in KERNELS}

    results = {}
    if kernels.BACKEND == "cython":
        results["cython"] = time_renders(scene, angles, cfg, args.repeats)
    else:
        print("compiled kernels not built; timing the numpy fallback only")
    use_backend(_pykernels)
    try:
        results["numpy"] = time_renders(scene, angles, cfg, args.repeats)
    finally:
        for name, fn in compiled.items():
            setattr(kernels, name, fn)

    for name, (sec, _) in results.items():
        print(f"{name:>7s}: {1e3 * sec:8.2f} ms per {args.size}x{args.size} render")
    if len(results) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(results["cython"][1], results["numpy"][1]))
        print(f"speedup: {results['numpy'][0] / results['cython'][0]:.1f}x, identical images: {same}")


if __name__ == "__main__":
    main()
