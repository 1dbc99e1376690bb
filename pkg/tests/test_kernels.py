"""Both backends must agree; the dispatching backend is whichever the env flag selected."""
import os
import subprocess
import sys

import numpy as np
import pytest

from astrolsm import _kernels
from astrolsm.reservoir import KERNEL_ORDER, ReservoirSpec, build

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def straightforward_euler(x, y, z, s, r, d, dt, n):
    out = []
    for _ in range(n):
        x, y, z = (x + dt * (s * (y - x)), y + dt * (x * (r - z) - y), z + dt * (x * y - d * z))
        out.append((x, y, z))
    return np.array(out)


@needs_numba
def test_euler_backends_identical():
    args = (1.0, 1.0, 1.0, 10.0, 28.0, 8 / 3, 0.01, 5000)
    a = _kernels.integrate_euler_numba(*args)
    b = _kernels.integrate_euler_numpy(*args)
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(a - straightforward_euler(*args))) < 1e-12


@needs_numba
@pytest.mark.parametrize("every", [True, False])
@pytest.mark.parametrize("N,A,scale", [(10, 20, 1.0), (31, 57, 2.0), (50, 100, 0.7)])
def test_reservoir_backends_agree(N, A, scale, every):
    spec = ReservoirSpec(N, A, weight_scale=scale, seed=N + A)
    w = build(spec)
    x = np.random.default_rng(N).normal(size=(25, 150))
    proj = x @ w["W_in"].T
    blocks = [np.ascontiguousarray(w[n]) for n in KERNEL_ORDER]
    cfg = (0.9, 1.0, 0.99, 0.95, 1.0, 30, every)
    fa, oka = _kernels.run_reservoir_numba(proj, *blocks, *cfg)
    fb, okb = _kernels.run_reservoir_numpy(proj, *blocks, *cfg)
    assert oka.all() and okb.all()
    # summation order differs between the loops and BLAS; spikes are thresholded,
    # so agreement is exact unless a potential lands within rounding of the threshold
    np.testing.assert_allclose(fa, fb, atol=1e-12)


def test_backend_flag_selects_numpy():
    env = dict(os.environ, ASTROLSM_DISABLE_NUMBA="1")
    code = "from astrolsm import _kernels; print(_kernels.backend_name())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "numpy"
