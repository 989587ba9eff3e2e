#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Run from the repo root:

    python3 benchmarks/bench_kernels.py [--n-agents N] [--years T]

Times the two hot kernels (one-year propagation update, poverty-duration
recursion) and a full per-year calibration fit under each backend, and
verifies the backends agree bit for bit while timing.
"""

import argparse
import time

import numpy as np

from povdyn import _kernels_py
from povdyn.rgbm import ModelParams, Population, init_lognormal
from povdyn.rng import STEP_TAG, RngStream

try:
    from povdyn import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_step(backend, x, w, m, out):
    return _time(lambda: backend.step_update(x, w, m, 0.0231, 0.15, 0.02,
                                             out, 0, len(x)))


def bench_durations(backend, poor_u8, out):
    return _time(lambda: backend.fill_durations(poor_u8, out))


def bench_fit_year(pop, params, seed):
    # mirrors one calibration year: frozen noise, ~40 objective evaluations
    from povdyn.calibrate import CalibrationConfig, fit_tau_year
    cfg = CalibrationConfig()
    stream = RngStream(seed)
    return _time(lambda: fit_tau_year(pop, 0.30, params, cfg, stream),
                 repeat=3)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-agents", type=int, default=100_000)
    ap.add_argument("--years", type=int, default=60)
    args = ap.parse_args()

    params = ModelParams(n_agents=args.n_agents)
    pop = init_lognormal(params, 0.3, seed=1, year=1951)
    x = pop.incomes
    w = RngStream(1).normals(1951, STEP_TAG, 0, args.n_agents)
    m = float(np.mean(x))
    out_py = np.empty_like(x)

    rng = np.random.default_rng(0)
    poor = np.ascontiguousarray(rng.random((args.n_agents, args.years)) < 0.4)
    poor_u8 = poor.view(np.uint8)
    dur_py = np.empty(poor.shape, dtype=np.int32)

    rows = []
    t_py_step = bench_step(_kernels_py, x, w, m, out_py)
    t_py_dur = bench_durations(_kernels_py, poor_u8, dur_py)
    rows.append(("python", t_py_step, t_py_dur))

    if _kernels is not None:
        out_c = np.empty_like(x)
        dur_c = np.empty(poor.shape, dtype=np.int32)
        t_c_step = bench_step(_kernels, x, w, m, out_c)
        t_c_dur = bench_durations(_kernels, poor_u8, dur_c)
        assert np.array_equal(out_py, out_c), "backends disagree on step"
        assert np.array_equal(dur_py, dur_c), "backends disagree on durations"
        rows.append(("compiled", t_c_step, t_c_dur))

    print(f"n_agents={args.n_agents}  years={args.years}")
    print(f"{'backend':<10} {'step (ms)':>12} {'durations (ms)':>16}")
    for name, ts, td in rows:
        print(f"{name:<10} {ts * 1e3:12.3f} {td * 1e3:16.3f}")
    if _kernels is not None:
        print(f"{'speedup':<10} {t_py_step / t_c_step:11.2f}x "
              f"{t_py_dur / t_c_dur:15.2f}x  (bit-identical outputs)")

    # one calibration year (frozen noise + ~40 objective evaluations);
    # shared across backends except for the step kernels above
    from povdyn.backend import backend_name
    t_fit = bench_fit_year(pop, params, seed=1)
    print(f"fit_tau_year (active backend: {backend_name()}): "
          f"{t_fit * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
