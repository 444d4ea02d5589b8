"""Pure numpy implementation of the bounded revised simplex iteration.

Mirrors ``_kernel.pyx`` step for step; used when the compiled extension is
unavailable or ``RDDP_PURE_PYTHON`` is set.
"""

import numpy as np

BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
FREE = 3

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
SINGULAR = 3


def refactor(A, b, x, basis, binv):
    """Recompute the basis inverse and the basic values from scratch.

    Returns False when the basis matrix is numerically singular.
    """
    B = A[:, basis]
    try:
        inv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        return False
    m = B.shape[0]
    if m and np.max(np.abs(B @ inv - np.eye(m))) > 1e-7:
        return False
    binv[:, :] = inv
    xn = x.copy()
    xn[basis] = 0.0
    x[basis] = inv @ (b - A @ xn)
    return True


def iterate(A, b, c, lo, hi, x, basis, state, binv, max_iter, piv_tol,
            harris_tol, opt_tol, refactor_every, bland_after):
    """Run primal simplex pivots until optimality or failure.

    All array arguments except ``A``, ``b``, ``c``, ``lo``, ``hi`` are
    updated in place. Returns ``(status, iterations)``.
    """
    m, N = A.shape
    movable = hi > lo
    iters = 0
    since_refactor = 0
    degenerate = 0
    bland = False
    while True:
        if iters >= max_iter:
            return ITERATION_LIMIT, iters
        y = binv.T @ c[basis]
        d = c - y @ A
        at_lo = (state == AT_LOWER) & movable
        at_hi = (state == AT_UPPER) & movable
        free = state == FREE
        inc = ((at_lo | free) & (d < -opt_tol))
        dec = ((at_hi | free) & (d > opt_tol))
        eligible = inc | dec
        if not eligible.any():
            return OPTIMAL, iters
        if bland:
            q = int(np.flatnonzero(eligible)[0])
        else:
            score = np.where(eligible, np.abs(d), -1.0)
            q = int(np.argmax(score))
        direction = 1.0 if inc[q] else -1.0

        w = binv @ A[:, q]
        g = -direction * w
        xb = x[basis]
        lob = lo[basis]
        hib = hi[basis]
        down = (g < -piv_tol) & np.isfinite(lob)
        up = (g > piv_tol) & np.isfinite(hib)
        span = hi[q] - lo[q]

        r = -1
        theta = np.inf
        if down.any() or up.any():
            ratio = np.full(m, np.inf)
            relaxed = np.full(m, np.inf)
            ratio[down] = (xb[down] - lob[down]) / -g[down]
            relaxed[down] = (xb[down] - lob[down] + harris_tol) / -g[down]
            ratio[up] = (hib[up] - xb[up]) / g[up]
            relaxed[up] = (hib[up] - xb[up] + harris_tol) / g[up]
            if bland:
                tmin = ratio.min()
                ties = np.flatnonzero(ratio <= tmin + 1e-12)
                r = int(ties[np.argmin(basis[ties])])
            else:
                tmax = relaxed.min()
                cand = np.flatnonzero(ratio <= tmax)
                mag = np.abs(g[cand])
                r = int(cand[np.argmax(mag)])
            theta = max(ratio[r], 0.0)

        if span <= theta:
            # bound flip, basis unchanged
            if not np.isfinite(span):
                return UNBOUNDED, iters
            x[basis] = xb + g * span
            if direction > 0:
                x[q] = hi[q]
                state[q] = AT_UPPER
            else:
                x[q] = lo[q]
                state[q] = AT_LOWER
            iters += 1
            degenerate = 0
            continue
        if r < 0:
            return UNBOUNDED, iters

        x[basis] = xb + g * theta
        x[q] += direction * theta
        leave = basis[r]
        if g[r] < 0:
            x[leave] = lo[leave]
            state[leave] = AT_LOWER
        else:
            x[leave] = hi[leave]
            state[leave] = AT_UPPER
        basis[r] = q
        state[q] = BASIC

        row = binv[r] / w[r]
        binv -= np.outer(w, row)
        binv[r] = row

        iters += 1
        if theta <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        since_refactor += 1
        if since_refactor >= refactor_every:
            since_refactor = 0
            if not refactor(A, b, x, basis, binv):
                return SINGULAR, iters


def pivot_in(A, x, basis, state, binv, r, q):
    """Degenerate pivot of nonbasic column ``q`` into basis row ``r``."""
    w = binv @ A[:, q]
    leave = basis[r]
    state[leave] = AT_LOWER
    basis[r] = q
    state[q] = BASIC
    row = binv[r] / w[r]
    binv -= np.outer(w, row)
    binv[r] = row
