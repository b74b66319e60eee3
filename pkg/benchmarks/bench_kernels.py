#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from scopenav._kernels import _pure

try:
    from scopenav._kernels import _native
except ImportError:
    _native = None


def make_sphere_triangles(subdivisions=3):
    import sys
    from pathlib import Path

    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
    from tests.conftest import make_icosphere

    return make_icosphere(radius=10.0, subdivisions=subdivisions).triangles


def bench(label, fn, repeats, unit_count, unit_name):
    best = min(timed(fn) for _ in range(repeats))
    rate = unit_count / best
    print(f"  {label:<28} {best * 1e3:9.3f} ms   {rate / 1e6:10.3f} M{unit_name}/s")
    return best


def timed(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def run_backend(name, kernels, repeats):
    print(f"[{name}]")

    body = bytes(range(48))
    block = bytes(np.random.default_rng(0).integers(0, 256, 4096, dtype=np.uint8))

    def crc_small():
        for _ in range(2000):
            kernels.crc64(body)

    def crc_block():
        for _ in range(100):
            kernels.crc64(block)

    bench("crc64 48 B x2000", crc_small, repeats, 2000 * 48 / 1e0, "B")
    bench("crc64 4 KiB x100", crc_block, repeats, 100 * 4096, "B")

    tris = make_sphere_triangles()
    rng = np.random.default_rng(1)
    origins = np.ascontiguousarray(rng.uniform(-12, 12, (500, 3)))
    direction = np.ascontiguousarray(np.array([0.26726124, 0.53452248, 0.80178373]))

    def rays():
        for origin in origins:
            kernels.ray_crossings(tris, origin, direction)

    n_tests = len(origins) * len(tris)
    bench(f"ray parity {len(tris)} tris x500", rays, repeats, n_tests, "tri-tests")

    volume = rng.uniform(-1000, 3000, (128, 128, 64)).astype(np.float32)
    coords = np.ascontiguousarray(rng.uniform(0, 63, (200_000, 3)))

    def trilinear():
        kernels.trilinear_sample(volume, coords, -1024.0)

    bench("trilinear 200k samples", trilinear, repeats, len(coords), "samples")
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _native is not None:
        run_backend("native (compiled)", _native, args.repeats)
    else:
        print("[native] extension not built; skipping\n")
    run_backend("pure (numpy fallback)", _pure, args.repeats)


if __name__ == "__main__":
    main()
