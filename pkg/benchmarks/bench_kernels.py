"""Time the compiled and pure-Python kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from synthdet import _pykernels
from synthdet.ace import AceParams, sample_positions

try:
    from synthdet import _ckernels
except ImportError:
    _ckernels = None


def raster_inputs(size, n_faces=400, rng=None):
    """Random overlapping triangles, about a tenth of the canvas each."""
    rng = rng or np.random.default_rng(1)
    centers = rng.uniform(0, size, (n_faces, 1, 2))
    pts = (centers + rng.normal(0, size / 10, (n_faces, 3, 2))).reshape(-1, 2)
    sz = rng.uniform(-1, 1, len(pts))
    colors = np.floor(rng.uniform(0, 255, (len(pts), 3)))
    faces = np.arange(len(pts), dtype=np.int64).reshape(-1, 3)
    return pts[:, 0].copy(), pts[:, 1].copy(), sz, colors, faces, size, size


def cases():
    rng = np.random.default_rng(0)
    channel = rng.integers(0, 256, (120, 160)).astype(np.float64)
    sample = sample_positions(channel.size, AceParams(5.0, 1024, 3))
    raster = raster_inputs(512, rng=rng)
    dst = rng.integers(0, 256, (480, 640, 3)).astype(np.uint8)
    src = rng.integers(0, 256, (200, 200, 4)).astype(np.uint8)
    return {
        "ace_response 160x120, 1024 samples": lambda k: k.ace_response(channel, sample, 5.0),
        "rasterize 400 triangles 512x512": lambda k: k.rasterize(*raster),
        "alpha_over 200x200 onto 640x480": lambda k: k.alpha_over(dst.copy(), src, 100, 80),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [_pykernels] + ([_ckernels] if _ckernels else [])
    print(f"{'kernel':40s}" + "".join(f"{b.NAME:>12s}" for b in backends) + ("     speedup" if _ckernels else ""))
    for name, fn in cases().items():
        best = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends]
        row = f"{name:40s}" + "".join(f"{t * 1e3:10.2f}ms" for t in best)
        if len(best) == 2:
            row += f"{best[0] / best[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
