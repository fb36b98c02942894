"""Time the RK4 transport kernel: numba versus pure numpy.

    python3 benchmarks/bench_transport.py [--steps N] [--dim D] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from symred import _accel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    mats = rng.normal(size=(2 * args.steps + 1, args.dim, args.dim))
    v0 = rng.normal(size=args.dim)
    h = 1.0 / args.steps

    kernels = {"numpy": _accel.rk4_linear_numpy}
    if _accel.HAVE_NUMBA:
        _accel.rk4_linear_numba(mats[:3], v0, h)  # compile outside the timing
        kernels["numba"] = _accel.rk4_linear_numba
    else:
        print("numba not installed; timing numpy only")

    ref = _accel.rk4_linear_numpy(mats, v0, h)
    best = {}
    for name, fn in kernels.items():
        diff = np.abs(fn(mats, v0, h) - ref).max()
        t = min(timeit.repeat(lambda: fn(mats, v0, h), number=1, repeat=args.repeat))
        best[name] = t
        print(f"{name:6s} {t * 1e3:9.3f} ms   max |diff| vs numpy = {diff:.1e}")
    if "numba" in best:
        print(f"speedup {best['numpy'] / best['numba']:.1f}x  (steps={args.steps}, dim={args.dim})")


if __name__ == "__main__":
    main()
