# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels (fused loops, GIL released).

Must stay bit-identical to ``_kernels_py``: same operation order, compiled
with -ffp-contract=off so a*b+c is never fused into an FMA.
"""

BACKEND = "compiled"


def step_update(double[::1] x, double[::1] w, double m, double mu_dt,
                double sigma, double tau_dt, double[::1] out,
                Py_ssize_t lo, Py_ssize_t hi):
    """out[i] = x + x*mu_dt + x*(sigma*w) - tau_dt*(x - m) on [lo, hi)."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(lo, hi):
            out[i] = (x[i] + x[i] * mu_dt + x[i] * (sigma * w[i])
                      - tau_dt * (x[i] - m))


def fill_durations(const unsigned char[:, ::1] poor_u8, int[:, ::1] out):
    """Consecutive-poor-year counters; column 0 starts the recursion."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = poor_u8.shape[0]
    cdef Py_ssize_t t = poor_u8.shape[1]
    with nogil:
        for i in range(n):
            out[i, 0] = poor_u8[i, 0]
            for j in range(1, t):
                if poor_u8[i, j]:
                    out[i, j] = out[i, j - 1] + 1
                else:
                    out[i, j] = 0
