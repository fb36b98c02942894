"""Hot numeric kernels.

Each kernel has a pure-numpy implementation and, when numba is importable, an
``@njit`` twin compiled from the same loop body.  Set ``SYMRED_NO_NUMBA=1``
to force the numpy path (useful for debugging and for the benchmark).
"""
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a soft dependency
    njit = None

HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("SYMRED_NO_NUMBA", "").strip() in ("", "0")


def _rk4_linear_loop(mats, v0, h):
    # mats holds the system matrix at t0, t0+h/2, t0+h, ... (2*steps+1 nodes)
    # for v' = -M(t) v.
    steps = (mats.shape[0] - 1) // 2
    d = v0.shape[0]
    out = np.empty((steps + 1, d))
    v = v0.copy()
    out[0] = v
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    for n in range(steps):
        m0 = mats[2 * n]
        m1 = mats[2 * n + 1]
        m2 = mats[2 * n + 2]
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc -= m0[k, j] * v[j]
            k1[k] = acc
        for k in range(d):
            tmp[k] = v[k] + 0.5 * h * k1[k]
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc -= m1[k, j] * tmp[j]
            k2[k] = acc
        for k in range(d):
            tmp[k] = v[k] + 0.5 * h * k2[k]
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc -= m1[k, j] * tmp[j]
            k3[k] = acc
        for k in range(d):
            tmp[k] = v[k] + h * k3[k]
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc -= m2[k, j] * tmp[j]
            k4[k] = acc
        for k in range(d):
            v[k] = v[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        out[n + 1] = v
    return out


def rk4_linear_numpy(mats, v0, h):
    """Classical RK4 for ``v' = -M(t) v`` with M sampled at half steps.

    Returns the trajectory, shape ``(steps + 1, d)``.
    """
    mats = np.asarray(mats, dtype=float)
    v = np.array(v0, dtype=float)
    steps = (mats.shape[0] - 1) // 2
    out = np.empty((steps + 1, v.shape[0]))
    out[0] = v
    for n in range(steps):
        m0, m1, m2 = mats[2 * n], mats[2 * n + 1], mats[2 * n + 2]
        k1 = -(m0 @ v)
        k2 = -(m1 @ (v + 0.5 * h * k1))
        k3 = -(m1 @ (v + 0.5 * h * k2))
        k4 = -(m2 @ (v + h * k3))
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = v
    return out


if HAVE_NUMBA:
    _rk4_linear_jit = njit(cache=False)(_rk4_linear_loop)

    def rk4_linear_numba(mats, v0, h):
        return _rk4_linear_jit(
            np.ascontiguousarray(mats, dtype=np.float64),
            np.ascontiguousarray(v0, dtype=np.float64),
            float(h),
        )
else:  # pragma: no cover
    rk4_linear_numba = None


def rk4_linear(mats, v0, h):
    if USE_NUMBA:
        return rk4_linear_numba(mats, v0, h)
    return rk4_linear_numpy(mats, v0, h)


def backend():
    return "numba" if USE_NUMBA else "numpy"
