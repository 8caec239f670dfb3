"""Benchmark: compiled leapfrog kernels vs the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from homwave._kernels import _leapfrog_py as pyk
from homwave._kernels import backend

try:
    from homwave._kernels import _leapfrog_c as ck
except ImportError:
    ck = None


def time_fn(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_1d(n, nsteps):
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal(n)
    up0 = rng.standard_normal(n)
    ah = 1.0 + rng.random(n)
    rows = []
    for name, mod in (("compiled", ck), ("python", pyk)):
        if mod is None:
            continue
        u, up = u0.copy(), up0.copy()
        dt = time_fn(mod.leap1d, u, up, ah, 1.0, 1e-6, nsteps)
        rows.append((f"leap1d n={n} steps={nsteps}", name, dt, n * nsteps / dt / 1e6))
    return rows


def bench_2d(n, nsteps):
    rng = np.random.default_rng(1)
    u0 = rng.standard_normal((n, n))
    up0 = rng.standard_normal((n, n))
    a11 = 1.0 + rng.random((n, n))
    a22 = 1.0 + rng.random((n, n))
    a12 = 0.1 * rng.standard_normal((n, n))
    rows = []
    for name, mod in (("compiled", ck), ("python", pyk)):
        if mod is None:
            continue
        u, up = u0.copy(), up0.copy()
        dt = time_fn(mod.leap2d, u, up, a11, a22, a12, 1.0, 1e-6, nsteps, repeat=2)
        rows.append((f"leap2d n={n}x{n} steps={nsteps}", name, dt, n * n * nsteps / dt / 1e6))
    return rows


def main():
    print(f"active backend: {backend()}")
    if ck is None:
        print("compiled kernels not built; timing the fallback only")
    rows = []
    rows += bench_1d(16384, 4096)
    rows += bench_2d(256, 256)
    rows += bench_2d(512, 64)
    print(f"\n{'case':34s} {'backend':9s} {'seconds':>9s} {'Mnode-steps/s':>14s}")
    speed = {}
    for case, name, dt, rate in rows:
        print(f"{case:34s} {name:9s} {dt:9.3f} {rate:14.1f}")
        speed.setdefault(case, {})[name] = dt
    for case, d in speed.items():
        if "compiled" in d and "python" in d:
            print(f"{case}: compiled is {d['python'] / d['compiled']:.1f}x faster")


if __name__ == "__main__":
    main()
