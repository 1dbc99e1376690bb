"""Time the numba and numpy backends of the Euler and reservoir kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are called directly, so the env flag is irrelevant here.  The
first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from astrolsm import _kernels
from astrolsm.reservoir import KERNEL_ORDER, ReservoirSpec, build


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=100_000, help="Euler steps")
    ap.add_argument("--windows", type=int, default=200, help="reservoir batch size")
    args = ap.parse_args()

    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    euler_args = (1.0, 1.0, 1.0, 10.0, 28.0, 8 / 3, 0.01, args.steps)
    rows = []
    _kernels.integrate_euler_numba(*euler_args)
    rows.append((f"euler {args.steps} steps",
                 best_of(lambda: _kernels.integrate_euler_numpy(*euler_args), args.repeat),
                 best_of(lambda: _kernels.integrate_euler_numba(*euler_args), args.repeat)))

    for N, A in ((10, 20), (50, 100), (200, 400)):
        spec = ReservoirSpec(N, A, seed=0)
        w = build(spec)
        x = np.random.default_rng(0).normal(size=(args.windows, 150))
        proj = x @ w["W_in"].T
        blocks = [np.ascontiguousarray(w[n]) for n in KERNEL_ORDER]
        cfg = (0.9, 1.0, 0.99, 0.95, 1.0, 30, True)
        _kernels.run_reservoir_numba(proj, *blocks, *cfg)
        rows.append((f"reservoir N={N} A={A}, {args.windows} windows",
                     best_of(lambda: _kernels.run_reservoir_numpy(proj, *blocks, *cfg), args.repeat),
                     best_of(lambda: _kernels.run_reservoir_numba(proj, *blocks, *cfg), args.repeat)))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy s':>9}  {'numba s':>9}  {'speedup':>7}")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np:9.4f}  {t_nb:9.4f}  {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
