"""Compare the compiled and pure-numpy random-number kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 200000] [--cols 50] [--repeat 3]

Prints the best wall time of each backend for a block of standard normals
and uniforms, the speed-up, and the largest difference between the two
outputs (the backends are meant to agree to rounding).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bdsde import _pykernels, rng


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--cols", type=int, default=50)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        from bdsde import _ckernels
    except ImportError:
        print("compiled extension not built; only the numpy backend is available")
        _ckernels = None
    key = rng.derive_key(2024, rng.W_STREAM)
    for name, draw in (("normals", rng.normals), ("uniforms", rng.uniforms)):
        t_py, out_py = _best(lambda: draw(key, args.rows, args.cols, threads=1, kernels=_pykernels), args.repeat)
        print(f"{name:8s} numpy  {t_py:8.3f} s")
        if _ckernels is None:
            continue
        t_c, out_c = _best(lambda: draw(key, args.rows, args.cols, threads=1, kernels=_ckernels), args.repeat)
        diff = float(np.max(np.abs(out_c - out_py)))
        print(f"{name:8s} cython {t_c:8.3f} s  speed-up {t_py / t_c:5.2f}x  max |diff| {diff:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
