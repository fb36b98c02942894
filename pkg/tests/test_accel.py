import json
import os
import subprocess
import sys

import numpy as np
import pytest

from symred import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _system(rng, steps=200, d=4):
    return rng.normal(size=(2 * steps + 1, d, d)), rng.normal(size=d), 1.0 / steps


def test_constant_matrix_matches_expm():
    # v' = -M v with constant M: RK4 at h = 1e-3 is good to ~1e-12
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3)) * 0.5
    steps = 1000
    mats = np.broadcast_to(M, (2 * steps + 1, 3, 3))
    v0 = rng.normal(size=3)
    w, V = np.linalg.eig(-M)
    exact = (V @ np.diag(np.exp(w)) @ np.linalg.solve(V, v0)).real
    got = _accel.rk4_linear_numpy(mats, v0, 1.0 / steps)[-1]
    assert np.abs(got - exact).max() <= 1e-10


def test_numpy_kernel_shape_and_start():
    rng = np.random.default_rng(1)
    mats, v0, h = _system(rng, steps=7)
    out = _accel.rk4_linear_numpy(mats, v0, h)
    assert out.shape == (8, 4)
    assert np.array_equal(out[0], v0)


def test_loop_body_matches_vectorised():
    rng = np.random.default_rng(2)
    mats, v0, h = _system(rng)
    a = _accel._rk4_linear_loop(mats, v0, h)
    b = _accel.rk4_linear_numpy(mats, v0, h)
    assert np.abs(a - b).max() <= 1e-12


@needs_numba
def test_numba_matches_numpy():
    rng = np.random.default_rng(3)
    for d in (1, 2, 6):
        mats, v0, h = _system(rng, d=d)
        a = _accel.rk4_linear_numba(mats, v0, h)
        b = _accel.rk4_linear_numpy(mats, v0, h)
        assert np.abs(a - b).max() <= 1e-12


@needs_numba
def test_numba_does_not_mutate_input():
    rng = np.random.default_rng(4)
    mats, v0, h = _system(rng, steps=5)
    keep = v0.copy()
    _accel.rk4_linear_numba(mats, v0, h)
    assert np.array_equal(v0, keep)


def test_backend_reflects_flag():
    expected = "numba" if _accel.HAVE_NUMBA and os.environ.get("SYMRED_NO_NUMBA", "") in ("", "0") else "numpy"
    assert _accel.backend() == expected


@pytest.mark.parametrize("flag, want", [("1", "numpy"), ("0", None)])
def test_env_flag_in_subprocess(flag, want):
    env = dict(os.environ, SYMRED_NO_NUMBA=flag)
    proc = subprocess.run(
        [sys.executable, "-c", "from symred import _accel; print(_accel.backend())"],
        capture_output=True, text=True, env=env, check=True,
    )
    if want is None:
        want = "numba" if _accel.HAVE_NUMBA else "numpy"
    assert proc.stdout.strip() == want


def test_transport_agrees_across_backends():
    code = (
        "import json\n"
        "from symred.expr import Var\n"
        "from symred.geometry import Chart, ConnectionCoeffs, PathSpec, parallel_transport\n"
        "c = Chart.box(['a', 'b'])\n"
        "g = ConnectionCoeffs.from_entries(c, {(0, 1, 1): Var('a'), (1, 0, 1): Var('b')}, symmetric=True)\n"
        "p = PathSpec.line(c, [0.1, -0.2], [0.3, 0.5])\n"
        "print(json.dumps(parallel_transport(g, p, [1.0, 0.5]).tolist()))\n"
    )
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, SYMRED_NO_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
        outs.append(np.array(json.loads(proc.stdout)))
    assert np.abs(outs[0] - outs[1]).max() <= 1e-12
