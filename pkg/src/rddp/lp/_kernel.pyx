# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bounded revised simplex iteration.

Same algorithm and state encoding as ``_kernel_py``; the loops run without
the GIL so independent solves can overlap in threads.
"""

import numpy as np

from libc.math cimport fabs, INFINITY, isfinite

DEF BASIC = 0
DEF AT_LOWER = 1
DEF AT_UPPER = 2
DEF FREE = 3

DEF OPTIMAL = 0
DEF UNBOUNDED = 1
DEF ITERATION_LIMIT = 2
DEF SINGULAR = 3


cdef bint _invert(double[:, ::1] A, Py_ssize_t[::1] basis, double[:, ::1] work,
                  double[:, ::1] binv) noexcept nogil:
    cdef Py_ssize_t m = binv.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double big, v, piv, f, scale = 1.0
    for i in range(m):
        for j in range(m):
            v = A[i, basis[j]]
            work[i, j] = v
            binv[i, j] = 1.0 if i == j else 0.0
            if fabs(v) > scale:
                scale = fabs(v)
    for k in range(m):
        p = k
        big = fabs(work[k, k])
        for i in range(k + 1, m):
            if fabs(work[i, k]) > big:
                big = fabs(work[i, k])
                p = i
        if big < 1e-12 * scale:
            return False
        if p != k:
            for j in range(m):
                v = work[k, j]
                work[k, j] = work[p, j]
                work[p, j] = v
                v = binv[k, j]
                binv[k, j] = binv[p, j]
                binv[p, j] = v
        piv = work[k, k]
        for j in range(m):
            work[k, j] /= piv
            binv[k, j] /= piv
        for i in range(m):
            if i == k:
                continue
            f = work[i, k]
            if f == 0.0:
                continue
            for j in range(k, m):
                work[i, j] -= f * work[k, j]
            for j in range(m):
                binv[i, j] -= f * binv[k, j]
    return True


cdef void _basic_values(double[:, ::1] A, double[::1] b, double[::1] x,
                        Py_ssize_t[::1] basis, signed char[::1] state,
                        double[:, ::1] binv, double[::1] rhs) noexcept nogil:
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t i, j
    cdef double s, xj
    for i in range(m):
        s = b[i]
        for j in range(N):
            if state[j] != BASIC:
                xj = x[j]
                if xj != 0.0:
                    s -= A[i, j] * xj
        rhs[i] = s
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += binv[i, j] * rhs[j]
        x[basis[i]] = s


def refactor(double[:, ::1] A, double[::1] b, double[::1] x,
             Py_ssize_t[::1] basis, double[:, ::1] binv, signed char[::1] state=None):
    """Recompute the basis inverse and the basic values from scratch."""
    cdef Py_ssize_t m = A.shape[0]
    cdef double[:, ::1] work = np.empty((m, m))
    cdef double[::1] rhs = np.empty(m)
    cdef signed char[::1] st
    cdef bint ok
    cdef Py_ssize_t i
    if state is None:
        st = np.full(A.shape[1], AT_LOWER, dtype=np.int8)
        for i in range(m):
            st[basis[i]] = BASIC
    else:
        st = state
    with nogil:
        ok = _invert(A, basis, work, binv)
        if ok:
            _basic_values(A, b, x, basis, st, binv, rhs)
    return bool(ok)


def pivot_in(double[:, ::1] A, double[::1] x, Py_ssize_t[::1] basis,
             signed char[::1] state, double[:, ::1] binv, Py_ssize_t r, Py_ssize_t q):
    """Degenerate pivot of nonbasic column ``q`` into basis row ``r``."""
    cdef Py_ssize_t m = A.shape[0]
    cdef double[::1] w = np.empty(m)
    cdef double[::1] row = np.empty(m)
    cdef Py_ssize_t i, j
    cdef double s, wi
    with nogil:
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += binv[i, j] * A[j, q]
            w[i] = s
        state[basis[r]] = AT_LOWER
        basis[r] = q
        state[q] = BASIC
        for j in range(m):
            row[j] = binv[r, j] / w[r]
        for i in range(m):
            wi = w[i]
            if i == r or wi == 0.0:
                continue
            for j in range(m):
                binv[i, j] -= wi * row[j]
        for j in range(m):
            binv[r, j] = row[j]


cdef int _iterate(double[:, ::1] A, double[::1] b, double[::1] c, double[::1] lo,
                  double[::1] hi, double[::1] x, Py_ssize_t[::1] basis,
                  signed char[::1] state, double[:, ::1] binv, long max_iter,
                  double piv_tol, double harris_tol, double opt_tol,
                  long refactor_every, long bland_after, long *iters_out,
                  double[::1] y, double[::1] d, double[::1] w, double[::1] g,
                  double[::1] row, double[:, ::1] work, double[::1] rhs) noexcept nogil:
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t i, j, k, q, r, leave
    cdef long iters = 0, since_refactor = 0, degenerate = 0
    cdef bint bland = False, movable, inc
    cdef double ck, yi, best, dj, direction, span, theta, tmax, t, relaxed
    cdef double mag, xb, bound, wi, tmin
    cdef signed char st

    while True:
        if iters >= max_iter:
            iters_out[0] = iters
            return ITERATION_LIMIT

        for i in range(m):
            y[i] = 0.0
        for k in range(m):
            ck = c[basis[k]]
            if ck != 0.0:
                for i in range(m):
                    y[i] += ck * binv[k, i]
        for j in range(N):
            d[j] = c[j]
        for i in range(m):
            yi = y[i]
            if yi != 0.0:
                for j in range(N):
                    d[j] -= yi * A[i, j]

        q = -1
        best = -1.0
        inc = False
        for j in range(N):
            st = state[j]
            if st == BASIC:
                continue
            dj = d[j]
            movable = hi[j] > lo[j]
            if st == FREE:
                if fabs(dj) <= opt_tol:
                    continue
            elif st == AT_LOWER:
                if not movable or dj >= -opt_tol:
                    continue
            elif st == AT_UPPER:
                if not movable or dj <= opt_tol:
                    continue
            if bland:
                q = j
                break
            if fabs(dj) > best:
                best = fabs(dj)
                q = j
        if q < 0:
            iters_out[0] = iters
            return OPTIMAL
        direction = 1.0 if d[q] < 0.0 else -1.0

        for i in range(m):
            ck = 0.0
            for j in range(m):
                ck += binv[i, j] * A[j, q]
            w[i] = ck
            g[i] = -direction * ck

        span = hi[q] - lo[q]
        r = -1
        theta = INFINITY
        if bland:
            tmin = INFINITY
            for i in range(m):
                leave = basis[i]
                if g[i] < -piv_tol and isfinite(lo[leave]):
                    t = (x[leave] - lo[leave]) / -g[i]
                elif g[i] > piv_tol and isfinite(hi[leave]):
                    t = (hi[leave] - x[leave]) / g[i]
                else:
                    continue
                if t < tmin:
                    tmin = t
            if tmin < INFINITY:
                for i in range(m):
                    leave = basis[i]
                    if g[i] < -piv_tol and isfinite(lo[leave]):
                        t = (x[leave] - lo[leave]) / -g[i]
                    elif g[i] > piv_tol and isfinite(hi[leave]):
                        t = (hi[leave] - x[leave]) / g[i]
                    else:
                        continue
                    if t <= tmin + 1e-12 and (r < 0 or basis[i] < basis[r]):
                        r = i
                        theta = t
        else:
            tmax = INFINITY
            for i in range(m):
                leave = basis[i]
                if g[i] < -piv_tol and isfinite(lo[leave]):
                    relaxed = (x[leave] - lo[leave] + harris_tol) / -g[i]
                elif g[i] > piv_tol and isfinite(hi[leave]):
                    relaxed = (hi[leave] - x[leave] + harris_tol) / g[i]
                else:
                    continue
                if relaxed < tmax:
                    tmax = relaxed
            if tmax < INFINITY:
                mag = -1.0
                for i in range(m):
                    leave = basis[i]
                    if g[i] < -piv_tol and isfinite(lo[leave]):
                        t = (x[leave] - lo[leave]) / -g[i]
                    elif g[i] > piv_tol and isfinite(hi[leave]):
                        t = (hi[leave] - x[leave]) / g[i]
                    else:
                        continue
                    if t <= tmax and fabs(g[i]) > mag:
                        mag = fabs(g[i])
                        r = i
                        theta = t
        if r >= 0 and theta < 0.0:
            theta = 0.0

        if span <= theta:
            if not isfinite(span):
                iters_out[0] = iters
                return UNBOUNDED
            for i in range(m):
                x[basis[i]] += g[i] * span
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
            iters_out[0] = iters
            return UNBOUNDED

        for i in range(m):
            x[basis[i]] += g[i] * theta
        x[q] += direction * theta
        leave = basis[r]
        if g[r] < 0.0:
            x[leave] = lo[leave]
            state[leave] = AT_LOWER
        else:
            x[leave] = hi[leave]
            state[leave] = AT_UPPER
        basis[r] = q
        state[q] = BASIC

        for j in range(m):
            row[j] = binv[r, j] / w[r]
        for i in range(m):
            wi = w[i]
            if i == r or wi == 0.0:
                continue
            for j in range(m):
                binv[i, j] -= wi * row[j]
        for j in range(m):
            binv[r, j] = row[j]

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
            if not _invert(A, basis, work, binv):
                iters_out[0] = iters
                return SINGULAR
            _basic_values(A, b, x, basis, state, binv, rhs)


def iterate(double[:, ::1] A, double[::1] b, double[::1] c, double[::1] lo,
            double[::1] hi, double[::1] x, Py_ssize_t[::1] basis,
            signed char[::1] state, double[:, ::1] binv, long max_iter,
            double piv_tol, double harris_tol, double opt_tol,
            long refactor_every, long bland_after):
    """Run primal simplex pivots until optimality or failure.

    Returns ``(status, iterations)``; mutates ``x``, ``basis``, ``state``
    and ``binv`` in place.
    """
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    cdef double[::1] y = np.empty(m)
    cdef double[::1] d = np.empty(N)
    cdef double[::1] w = np.empty(m)
    cdef double[::1] g = np.empty(m)
    cdef double[::1] row = np.empty(m)
    cdef double[:, ::1] work = np.empty((m, m))
    cdef double[::1] rhs = np.empty(m)
    cdef long iters = 0
    cdef int status
    with nogil:
        status = _iterate(A, b, c, lo, hi, x, basis, state, binv, max_iter,
                          piv_tol, harris_tol, opt_tol, refactor_every,
                          bland_after, &iters, y, d, w, g, row, work, rhs)
    return status, iters
