# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop step recursion.

Same contract as netwatermark._loop_py.run_closed_loop; see that module
for the per-step equations.  All buffers are C-contiguous float64.
"""

import numpy as np

from libc.math cimport fabs, isfinite

COMPILED = True


def run_closed_loop(
    double[:, ::1] a,
    double[:, ::1] m_obs,
    double[:, ::1] b_stack,
    double[:, ::1] k_stack,
    double[:, ::1] l_stack,
    double[:, ::1] c_stack,
    Py_ssize_t[::1] q_off,
    Py_ssize_t[::1] m_off,
    double[:, ::1] w,
    double[:, ::1] z,
    double[:, ::1] e,
    double[:, ::1] v,
    double[:, :, ::1] nu,
    double[::1] x0,
    double[:, ::1] xhat0,
    double[:, ::1] x_out,
    double[:, :, ::1] xhat_out,
    double[:, ::1] y_out,
    double[:, :, ::1] s_out,
    double[:, ::1] u_out,
    double limit,
):
    cdef Py_ssize_t steps = x_out.shape[0]
    cdef Py_ssize_t kappa = xhat_out.shape[1]
    cdef Py_ssize_t p = a.shape[0]
    cdef Py_ssize_t m_total = c_stack.shape[0]
    cdef Py_ssize_t q_total = b_stack.shape[1]
    cdef Py_ssize_t n, i, r, col
    cdef double acc, peak, mag

    cdef double[::1] cur_x = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] nxt_x = np.empty(p, dtype=np.float64)
    cdef double[:, ::1] cur_h = np.array(xhat0, dtype=np.float64, copy=True)
    cdef double[:, ::1] nxt_h = np.empty((kappa, p), dtype=np.float64)

    for n in range(steps):
        for r in range(p):
            x_out[n, r] = cur_x[r]
        for i in range(kappa):
            for r in range(p):
                xhat_out[n, i, r] = cur_h[i, r]
        for r in range(m_total):
            acc = z[n, r] + v[n, r]
            for col in range(p):
                acc += c_stack[r, col] * cur_x[col]
            y_out[n, r] = acc
        for i in range(kappa):
            for r in range(m_total):
                s_out[n, i, r] = y_out[n, r] + nu[n, i, r]
        for i in range(kappa):
            for r in range(q_off[i], q_off[i + 1]):
                acc = e[n, r]
                for col in range(p):
                    acc += k_stack[r, col] * cur_h[i, col]
                u_out[n, r] = acc
        for r in range(p):
            acc = w[n, r]
            for col in range(p):
                acc += a[r, col] * cur_x[col]
            for col in range(q_total):
                acc += b_stack[r, col] * u_out[n, col]
            nxt_x[r] = acc
        for i in range(kappa):
            for r in range(p):
                acc = 0.0
                for col in range(p):
                    acc += m_obs[r, col] * cur_h[i, col]
                for col in range(m_total):
                    acc -= l_stack[r, col] * s_out[n, i, col]
                for col in range(q_off[i], q_off[i + 1]):
                    acc += b_stack[r, col] * e[n, col]
                nxt_h[i, r] = acc
        peak = 0.0
        for r in range(p):
            mag = fabs(nxt_x[r])
            if mag > peak:
                peak = mag
        for i in range(kappa):
            for r in range(p):
                mag = fabs(nxt_h[i, r])
                if mag > peak:
                    peak = mag
        if not isfinite(peak) or peak > limit:
            return n + 1
        cur_x, nxt_x = nxt_x, cur_x
        cur_h, nxt_h = nxt_h, cur_h
    return -1
