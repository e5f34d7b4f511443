"""Compare the compiled and NumPy grid kernels.

Usage::

    python benchmarks/bench_kernels.py [--array 8 8] [--step 0.5] [--repeat 5]

Prints per-call times of ``steered_norms`` and ``local_maxima_8`` for both
backends, then the time of one full MUSIC spectrum under each backend
(selected with ``CLAMSENSE_PURE_PYTHON`` in a child process, since the
backend is fixed at import).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from clamsense._kernels import _pykernels

try:
    from clamsense._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

END_TO_END = """
import time, numpy as np
from clamsense._kernels import BACKEND
from clamsense.estimate import covariance, music_spectrum
from clamsense.scene import ArrayGeometry
g = ArrayGeometry({mx}, {mz})
rng = np.random.default_rng(0)
y = rng.standard_normal((g.n_elements, 512)) + 1j * rng.standard_normal((g.n_elements, 512))
r = covariance(y)
t = time.perf_counter()
for _ in range({repeat}):
    music_spectrum(r, 5, g, {step})
print(BACKEND, (time.perf_counter() - t) / {repeat})
"""


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--array", type=int, nargs=2, default=(8, 8), metavar=("MX", "MZ"))
    ap.add_argument("--step", type=float, default=0.5, help="grid step in degrees")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mx, mz = args.array
    m = mx * mz
    rng = np.random.default_rng(1)
    grid = np.arange(0.0, 180.0 + 1e-9, args.step)
    g = rng.standard_normal((m, m - 5)) + 1j * rng.standard_normal((m, m - 5))
    spec = rng.standard_normal((grid.size, grid.size))

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"array {mx}x{mz}, grid {grid.size}x{grid.size}, best of {args.repeat}")
    print(f"{'kernel':<16}{'backend':<10}{'seconds':>12}")
    times = {}
    for kernel in ("steered_norms", "local_maxima_8"):
        for name, mod in backends:
            if kernel == "steered_norms":
                fn = lambda: mod.steered_norms(g, mx, mz, 0.5, grid, grid)
            else:
                fn = lambda: mod.local_maxima_8(spec)
            times[kernel, name] = best_of(fn, args.repeat)
            print(f"{kernel:<16}{name:<10}{times[kernel, name]:>12.4f}")
        if ("cython" in dict(backends)) and times[kernel, "python"] > 0:
            print(f"{'':<16}{'speed-up':<10}{times[kernel, 'python'] / times[kernel, 'cython']:>11.1f}x")

    print("\nmusic_spectrum end to end")
    code = END_TO_END.format(mx=mx, mz=mz, step=args.step, repeat=args.repeat)
    for flag in ("1", "0"):
        env = {**os.environ, "CLAMSENSE_PURE_PYTHON": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"{'music_spectrum':<16}{backend:<10}{float(secs):>12.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
