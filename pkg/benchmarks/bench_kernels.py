"""Compiled vs pure-Python kernel timings on a 128x128 scene.

    python3 benchmarks/bench_kernels.py [--size 128] [--repeat 5]

Both backends are imported directly, so the environment switch is not needed.
"""

import argparse
import math
import time

import numpy as np

from curvetrack import _pykernels
from curvetrack.levelset import _axis_crossings, _combine_axes

try:
    from curvetrack import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def scene(n):
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    phi = np.hypot(xs - n / 2, ys - n / 2) - n / 4
    rng = np.random.default_rng(0)
    dx, dy = _axis_crossings(phi)
    seed = _combine_axes(dx, dy)
    known = np.isfinite(seed)
    return {
        "phi": phi,
        "state": np.ascontiguousarray(np.stack([phi, xs, ys])),
        "flow": rng.normal(size=(2, n, n)) * 0.5,
        "image": rng.random((n, n)),
        "noise": rng.normal(size=(n, n)),
        "seed": np.where(known, seed, 0.0),
        "known": known.astype(np.uint8),
        "side": (phi <= 0).astype(np.uint8),
    }


def cases(mod, s):
    return {
        "fast_march (2nd order)": lambda: mod.fast_march(s["seed"], s["known"], math.inf, 2, s["side"]),
        "advect (3 channels)": lambda: mod.advect(s["state"], s["noise"], s["noise"]),
        "transport_step": lambda: mod.transport_step(s["state"], s["flow"], s["image"], 0.5, -0.2, 0.9,
                                                     s["noise"], s["noise"], 0.05),
        "region_sums": lambda: mod.region_sums(s["phi"], s["image"]),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    s = scene(args.size)
    py = cases(_pykernels, s)
    cy = cases(_ckernels, s) if _ckernels is not None else {}
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in py.items():
        tp = best_of(fn, args.repeat) * 1e3
        if name in cy:
            tc = best_of(cy[name], args.repeat) * 1e3
            print(f"{name:<24}{tp:>12.3f}{tc:>12.3f}{tp / tc:>9.1f}x")
        else:
            print(f"{name:<24}{tp:>12.3f}{'n/a':>12}{'':>10}")


if __name__ == "__main__":
    main()
