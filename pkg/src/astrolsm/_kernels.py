"""Hot loops: Euler integration of the Lorenz system and batched reservoir simulation.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one.  The
backend is chosen once at import time: set ``ASTROLSM_DISABLE_NUMBA=1`` to force
the numpy path (also used automatically when numba cannot be imported).
Both paths are importable directly for comparison and benchmarking.
"""
import os

import numpy as np

try:
    import numba
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_DISABLED = os.environ.get("ASTROLSM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAS_NUMBA and not _DISABLED


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# Lorenz / Euler
# --------------------------------------------------------------------------

def integrate_euler_numpy(x, y, z, sigma, rho, delta, dt, n_total):
    out = np.empty((n_total, 3))
    for i in range(n_total):
        dx = sigma * (y - x)
        dy = x * (rho - z) - y
        dz = x * y - delta * z
        x = x + dt * dx
        y = y + dt * dy
        z = z + dt * dz
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z
    return out


# --------------------------------------------------------------------------
# Reservoir
# --------------------------------------------------------------------------
# Block convention: W_<pre><post> has shape (post, pre) so current = W @ spikes.
# Spikes from step t-1 drive currents at step t for every block.

def run_reservoir_numpy(proj, w_n1n1, w_n2n2, w_n1n2, w_n2n1, w_n1a1, w_n2a2,
                        w_a1n2, w_a2n1, w_a1a1, w_a2a2,
                        n_beta, n_thr, a_beta, a_alpha, a_thr, presentations,
                        input_every_step):
    """Vectorised over windows.  ``proj`` is (B, n1): W_in applied to each window."""
    batch = proj.shape[0]
    n1, n2 = w_n1n1.shape[0], w_n2n2.shape[0]
    a1, a2 = w_a1a1.shape[0], w_a2a2.shape[0]
    u_n1 = np.zeros((batch, n1))
    u_n2 = np.zeros((batch, n2))
    u_a1 = np.zeros((batch, a1))
    u_a2 = np.zeros((batch, a2))
    i_a1 = np.zeros((batch, a1))
    i_a2 = np.zeros((batch, a2))
    s_n1 = np.zeros((batch, n1))
    s_n2 = np.zeros((batch, n2))
    s_a1 = np.zeros((batch, a1))
    s_a2 = np.zeros((batch, a2))
    counts = np.zeros((batch, n1 + n2))
    for t in range(presentations):
        drive = proj if (input_every_step or t == 0) else 0.0
        c_n1 = drive + s_n1 @ w_n1n1.T + s_n2 @ w_n2n1.T + s_a2 @ w_a2n1.T
        c_n2 = s_n2 @ w_n2n2.T + s_n1 @ w_n1n2.T + s_a1 @ w_a1n2.T
        c_a1 = s_a1 @ w_a1a1.T + s_n1 @ w_n1a1.T
        c_a2 = s_a2 @ w_a2a2.T + s_n2 @ w_n2a2.T

        u_n1 = n_beta * u_n1 + c_n1
        s_n1 = (u_n1 > n_thr).astype(np.float64)
        u_n1 = u_n1 - s_n1 * n_thr
        u_n2 = n_beta * u_n2 + c_n2
        s_n2 = (u_n2 > n_thr).astype(np.float64)
        u_n2 = u_n2 - s_n2 * n_thr

        i_a1 = a_alpha * i_a1 + c_a1
        u_a1 = a_beta * u_a1 + i_a1
        s_a1 = (u_a1 > a_thr).astype(np.float64)
        i_a2 = a_alpha * i_a2 + c_a2
        u_a2 = a_beta * u_a2 + i_a2
        s_a2 = (u_a2 > a_thr).astype(np.float64)

        counts[:, :n1] += s_n1
        counts[:, n1:] += s_n2
    finite = (np.isfinite(u_n1).all(axis=1) & np.isfinite(u_n2).all(axis=1)
              & np.isfinite(u_a1).all(axis=1) & np.isfinite(u_a2).all(axis=1))
    return counts / presentations, finite


def _run_reservoir_numba_impl(proj, w_n1n1, w_n2n2, w_n1n2, w_n2n1, w_n1a1, w_n2a2,
                              w_a1n2, w_a2n1, w_a1a1, w_a2a2,
                              n_beta, n_thr, a_beta, a_alpha, a_thr, presentations,
                              input_every_step):
    # same batched layout as the numpy path, with BLAS products and fused state updates
    batch = proj.shape[0]
    n1, n2 = w_n1n1.shape[0], w_n2n2.shape[0]
    a1, a2 = w_a1a1.shape[0], w_a2a2.shape[0]
    t_n1n1 = np.ascontiguousarray(w_n1n1.T)
    t_n2n2 = np.ascontiguousarray(w_n2n2.T)
    t_n1n2 = np.ascontiguousarray(w_n1n2.T)
    t_n2n1 = np.ascontiguousarray(w_n2n1.T)
    t_n1a1 = np.ascontiguousarray(w_n1a1.T)
    t_n2a2 = np.ascontiguousarray(w_n2a2.T)
    t_a1n2 = np.ascontiguousarray(w_a1n2.T)
    t_a2n1 = np.ascontiguousarray(w_a2n1.T)
    t_a1a1 = np.ascontiguousarray(w_a1a1.T)
    t_a2a2 = np.ascontiguousarray(w_a2a2.T)
    u_n1 = np.zeros((batch, n1))
    u_n2 = np.zeros((batch, n2))
    u_a1 = np.zeros((batch, a1))
    u_a2 = np.zeros((batch, a2))
    i_a1 = np.zeros((batch, a1))
    i_a2 = np.zeros((batch, a2))
    s_n1 = np.zeros((batch, n1))
    s_n2 = np.zeros((batch, n2))
    s_a1 = np.zeros((batch, a1))
    s_a2 = np.zeros((batch, a2))
    counts = np.zeros((batch, n1 + n2))
    for t in range(presentations):
        drive = input_every_step or t == 0
        d_n1a = np.dot(s_n1, t_n1n1)
        d_n1b = np.dot(s_n2, t_n2n1)
        d_n1c = np.dot(s_a2, t_a2n1)
        d_n2a = np.dot(s_n2, t_n2n2)
        d_n2b = np.dot(s_n1, t_n1n2)
        d_n2c = np.dot(s_a1, t_a1n2)
        d_a1a = np.dot(s_a1, t_a1a1)
        d_a1b = np.dot(s_n1, t_n1a1)
        d_a2a = np.dot(s_a2, t_a2a2)
        d_a2b = np.dot(s_n2, t_n2a2)
        for b in range(batch):
            for i in range(n1):
                c = (proj[b, i] if drive else 0.0) + d_n1a[b, i] + d_n1b[b, i] + d_n1c[b, i]
                v = n_beta * u_n1[b, i] + c
                if v > n_thr:
                    s_n1[b, i] = 1.0
                    v = v - n_thr
                    counts[b, i] += 1.0
                else:
                    s_n1[b, i] = 0.0
                u_n1[b, i] = v
            for i in range(n2):
                c = d_n2a[b, i] + d_n2b[b, i] + d_n2c[b, i]
                v = n_beta * u_n2[b, i] + c
                if v > n_thr:
                    s_n2[b, i] = 1.0
                    v = v - n_thr
                    counts[b, n1 + i] += 1.0
                else:
                    s_n2[b, i] = 0.0
                u_n2[b, i] = v
            for i in range(a1):
                i_a1[b, i] = a_alpha * i_a1[b, i] + (d_a1a[b, i] + d_a1b[b, i])
                u_a1[b, i] = a_beta * u_a1[b, i] + i_a1[b, i]
                s_a1[b, i] = 1.0 if u_a1[b, i] > a_thr else 0.0
            for i in range(a2):
                i_a2[b, i] = a_alpha * i_a2[b, i] + (d_a2a[b, i] + d_a2b[b, i])
                u_a2[b, i] = a_beta * u_a2[b, i] + i_a2[b, i]
                s_a2[b, i] = 1.0 if u_a2[b, i] > a_thr else 0.0
    finite = np.ones(batch, dtype=np.bool_)
    for b in range(batch):
        ok = True
        for i in range(n1):
            ok = ok and np.isfinite(u_n1[b, i])
        for i in range(n2):
            ok = ok and np.isfinite(u_n2[b, i])
        for i in range(a1):
            ok = ok and np.isfinite(u_a1[b, i])
        for i in range(a2):
            ok = ok and np.isfinite(u_a2[b, i])
        finite[b] = ok
        for i in range(n1 + n2):
            counts[b, i] = counts[b, i] / presentations
    return counts, finite


if HAS_NUMBA:
    integrate_euler_numba = numba.njit(cache=True)(integrate_euler_numpy)
    run_reservoir_numba = numba.njit(cache=True)(_run_reservoir_numba_impl)
else:  # pragma: no cover
    integrate_euler_numba = None
    run_reservoir_numba = None


def integrate_euler(x, y, z, sigma, rho, delta, dt, n_total):
    fn = integrate_euler_numba if USE_NUMBA else integrate_euler_numpy
    return fn(float(x), float(y), float(z), float(sigma), float(rho), float(delta),
              float(dt), int(n_total))


def run_reservoir(proj, blocks, n_beta, n_thr, a_beta, a_alpha, a_thr, presentations,
                  input_every_step=True):
    """Dispatch to the active backend.  ``blocks`` is ordered as in the kernels' signature."""
    fn = run_reservoir_numba if USE_NUMBA else run_reservoir_numpy
    proj = np.ascontiguousarray(proj, dtype=np.float64)
    blocks = [np.ascontiguousarray(w, dtype=np.float64) for w in blocks]
    return fn(proj, *blocks, float(n_beta), float(n_thr), float(a_beta), float(a_alpha),
              float(a_thr), int(presentations), bool(input_every_step))
