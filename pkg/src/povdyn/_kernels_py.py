"""Pure-NumPy implementations of the hot kernels.

Arithmetic here is the reference: the compiled extension must reproduce it
bit for bit (same elementary operations in the same order, no FMA
contraction), which `tests/test_backends.py` asserts.
"""

import numpy as np

BACKEND = "python"


def step_update(x, w, m, mu_dt, sigma, tau_dt, out, lo, hi):
    """out[i] = x + x*mu_dt + x*(sigma*w) - tau_dt*(x - m) on [lo, hi)."""
    xs = x[lo:hi]
    ws = w[lo:hi]
    out[lo:hi] = xs + xs * mu_dt + xs * (sigma * ws) - tau_dt * (xs - m)


def fill_durations(poor_u8, out):
    """Consecutive-poor-year counters; column 0 starts the recursion.

    poor_u8 : (n, t) uint8 view of the poverty flags
    out     : (n, t) int32, written in place
    """
    n_years = poor_u8.shape[1]
    out[:, 0] = poor_u8[:, 0]
    for j in range(1, n_years):
        np.multiply(out[:, j - 1] + 1, poor_u8[:, j], out=out[:, j])
