"""Pure-numpy closed-loop step recursion.

Reference implementation of the hot loop; netwatermark._loop is the
compiled twin with the same signature and semantics.  Keep the two in
lockstep: simulation tests compare their outputs.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def run_closed_loop(
    a,
    m_obs,
    b_stack,
    k_stack,
    l_stack,
    c_stack,
    q_off,
    m_off,
    w,
    z,
    e,
    v,
    nu,
    x0,
    xhat0,
    x_out,
    xhat_out,
    y_out,
    s_out,
    u_out,
    limit,
):
    """March the networked closed loop across the preallocated buffers.

    Per step n the recorded quantities satisfy

        y_n       = C x_n + z_n + v_n
        s_{i,.,n} = y_n + nu_{i,.,n}
        u_{i,n}   = K_i xhat_{i,n} + e_{i,n}
        x_{n+1}   = A x_n + B u_n + w_n
        xhat_{i,n+1} = (A+BK+LC) xhat_{i,n} - L s_{i,.,n} + B_i e_{i,n}

    Returns -1 on success, otherwise the 1-based step index at which some
    state magnitude left [0, limit] or stopped being finite.
    """
    steps = x_out.shape[0]
    kappa = xhat_out.shape[1]
    x = np.array(x0, dtype=float, copy=True)
    xhat = np.array(xhat0, dtype=float, copy=True)
    b_cols = [b_stack[:, q_off[i] : q_off[i + 1]] for i in range(kappa)]
    k_rows = [k_stack[q_off[i] : q_off[i + 1], :] for i in range(kappa)]
    for n in range(steps):
        x_out[n] = x
        xhat_out[n] = xhat
        y = c_stack @ x + z[n] + v[n]
        y_out[n] = y
        s_out[n] = y[None, :] + nu[n]
        for i in range(kappa):
            u_out[n, q_off[i] : q_off[i + 1]] = k_rows[i] @ xhat[i] + e[
                n, q_off[i] : q_off[i + 1]
            ]
        x = a @ x + b_stack @ u_out[n] + w[n]
        nxt = xhat @ m_obs.T - s_out[n] @ l_stack.T
        for i in range(kappa):
            nxt[i] += b_cols[i] @ e[n, q_off[i] : q_off[i + 1]]
        xhat = nxt
        peak = max(np.abs(x).max(), np.abs(xhat).max())
        if not np.isfinite(peak) or peak > limit:
            return n + 1
    return -1
