"""Pure NumPy kernels for log-domain Sinkhorn sweeps.

Semantics mirror the compiled twin in ``_kernels_cy.pyx``; the dispatcher
in :mod:`permqp.kernels` selects whichever is available at import time.
"""

import numpy as np

COMPILED = False


def row_logsumexp(log_k, log_v, out):
    """out[i] = log sum_j exp(log_k[i, j] + log_v[j])."""
    m = log_k + log_v[None, :]
    mx = m.max(axis=1)
    # all -inf rows stay -inf instead of producing nan
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        np.log(np.exp(m - safe[:, None]).sum(axis=1), out=out)
    out += mx
    return out


def col_logsumexp(log_k, log_u, out):
    """out[j] = log sum_i exp(log_k[i, j] + log_u[i])."""
    m = log_k + log_u[:, None]
    mx = m.max(axis=0)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        np.log(np.exp(m - safe[None, :]).sum(axis=0), out=out)
    out += mx
    return out


def scaled_matrix(log_k, log_u, log_v, out):
    """out[i, j] = exp(log_k[i, j] + log_u[i] + log_v[j])."""
    np.exp(log_k + log_u[:, None] + log_v[None, :], out=out)
    return out


def sinkhorn_loop(log_k, log_r, log_m, log_u, log_v, tol, max_sweeps, err_hist=None):
    """Alternate row/column rescaling until the scaled kernel's row sums
    match exp(log_r) to relative `tol`.

    log_u/log_v are updated in place.  Returns (sweeps, error, converged);
    the error after each check lands in err_hist when given.  Column sums
    are exact after every column sweep, so only the incoming scalings are
    column-checked (sweep 0).
    """
    nr = log_k.shape[0]
    nc = log_k.shape[1]
    buf_r = np.empty(nr)
    buf_c = np.empty(nc)
    r = np.exp(log_r)
    m = np.exp(log_m)
    err = np.inf
    for s in range(max_sweeps + 1):
        row_logsumexp(log_k, log_v, buf_r)
        err = float(np.max(np.abs(np.exp(log_u + buf_r) - r) / r))
        if s == 0:
            col_logsumexp(log_k, log_u, buf_c)
            col_err = float(np.max(np.abs(np.exp(log_v + buf_c) - m) / m))
            err = max(err, col_err)
        if err_hist is not None:
            err_hist[s] = err
        if err <= tol:
            return s, err, True
        if s == max_sweeps:
            return s, err, False
        np.subtract(log_r, buf_r, out=log_u)
        col_logsumexp(log_k, log_u, buf_c)
        np.subtract(log_m, buf_c, out=log_v)
    return max_sweeps, err, False
