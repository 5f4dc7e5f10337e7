# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled quantile-regression simplex kernel.

Twin of ``_qrpath_py`` with identical pivot rules; see that module for
the algorithm.  Changes to tolerances or tie-breaking must be made in
both files.
"""

from libc.math cimport fabs

import numpy as np

from crk._qrpath_py import PivotLimitError

cdef int _LB = 0
cdef int _UB = 1
cdef int _BASIC = 2

cdef double _FEAS_TOL = 1e-9
cdef double _PIVOT_TOL = 1e-11
cdef double _RATIO_TIE = 1e-9
cdef double _EPS = 2.220446049250313e-16


cdef int _lu_factor(double[:, ::1] A, int[::1] piv, Py_ssize_t p) noexcept:
    """Partial-pivot LU in place; returns -1 on a zero pivot."""
    cdef Py_ssize_t k, i, j, imax
    cdef double amax, v, akk, lik
    for k in range(p):
        imax = k
        amax = fabs(A[k, k])
        for i in range(k + 1, p):
            v = fabs(A[i, k])
            if v > amax:
                amax = v
                imax = i
        if amax <= 0.0:
            return -1
        piv[k] = <int> imax
        if imax != k:
            for j in range(p):
                v = A[k, j]
                A[k, j] = A[imax, j]
                A[imax, j] = v
        akk = A[k, k]
        for i in range(k + 1, p):
            A[i, k] /= akk
            lik = A[i, k]
            for j in range(k + 1, p):
                A[i, j] -= lik * A[k, j]
    return 0


cdef void _lu_solve(double[:, ::1] A, int[::1] piv, double[::1] b, Py_ssize_t p) noexcept:
    """Solve A x = b in place given the factorization P A = L U."""
    cdef Py_ssize_t k, j
    cdef double v
    for k in range(p):
        if piv[k] != k:
            v = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = v
    for k in range(p):
        for j in range(k):
            b[k] -= A[k, j] * b[j]
    for k in range(p - 1, -1, -1):
        for j in range(k + 1, p):
            b[k] -= A[k, j] * b[j]
        b[k] /= A[k, k]


cdef void _lu_solve_t(double[:, ::1] A, int[::1] piv, double[::1] b, Py_ssize_t p) noexcept:
    """Solve A' x = b in place given the factorization P A = L U."""
    cdef Py_ssize_t k, j
    cdef double v
    for k in range(p):
        for j in range(k):
            b[k] -= A[j, k] * b[j]
        b[k] /= A[k, k]
    for k in range(p - 1, -1, -1):
        for j in range(k + 1, p):
            b[k] -= A[j, k] * b[j]
    for k in range(p - 1, -1, -1):
        if piv[k] != k:
            v = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = v


def qr_path_into(double[::1] y, double[:, ::1] X, double[::1] taus,
                 double[:, ::1] out, int max_iter=0):
    """Fill out[l] with exact pinball-loss minimizers at each taus[l].

    Consecutive taus warm start from the previous optimal basis.
    Returns the total pivot count.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t L = taus.shape[0]
    cdef Py_ssize_t i, j, k, l, t, imax, jmax, tmp_i
    cdef double v, amax, piv_v, tau, tol, scale, best, band, ptol, theta
    cdef double acc, vmax
    cdef int rc, bland, iters, pivots, case_low, found, enter
    cdef int budget

    if max_iter <= 0:
        budget = 200 * <int> (n + p) + 2000
    else:
        budget = max_iter

    work_arr = np.empty((p, n), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    cols_arr = np.arange(n, dtype=np.intc)
    cdef int[::1] cols = cols_arr
    basis_arr = np.empty(p, dtype=np.intc)
    cdef int[::1] basis = basis_arr
    status_arr = np.empty(n, dtype=np.intc)
    cdef int[::1] status = status_arr
    XB_arr = np.empty((p, p), dtype=np.float64)
    cdef double[:, ::1] XB = XB_arr
    ipiv_arr = np.empty(p, dtype=np.intc)
    cdef int[::1] ipiv = ipiv_arr
    cvec_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] cvec = cvec_arr
    aB_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] aB = aB_arr
    beta_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] beta = beta_arr
    w_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] w = w_arr
    alpha_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    dred_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] dred = dred_arr

    # --- initial basis: complete-pivot elimination on X' ---------------
    scale = 0.0
    for i in range(p):
        for j in range(n):
            v = X[j, i]
            work[i, j] = v
            if fabs(v) > scale:
                scale = fabs(v)
    tol = (n if n > p else p) * _EPS * (scale if scale > 1.0 else 1.0)
    for k in range(p):
        amax = -1.0
        imax = k
        jmax = k
        for i in range(k, p):
            for j in range(k, n):
                v = fabs(work[i, j])
                if v > amax:
                    amax = v
                    imax = i
                    jmax = j
        if amax <= tol:
            raise np.linalg.LinAlgError("design matrix is rank deficient")
        if imax != k:
            for j in range(n):
                v = work[k, j]
                work[k, j] = work[imax, j]
                work[imax, j] = v
        if jmax != k:
            for i in range(p):
                v = work[i, k]
                work[i, k] = work[i, jmax]
                work[i, jmax] = v
            tmp_i = cols[k]
            cols[k] = cols[jmax]
            cols[jmax] = tmp_i
        piv_v = work[k, k]
        for i in range(k + 1, p):
            v = work[i, k] / piv_v
            for j in range(k, n):
                work[i, j] -= v * work[k, j]
    for i in range(p):
        basis[i] = cols[i]
    # insertion sort to match np.sort in the Python twin
    for i in range(1, p):
        rc = basis[i]
        j = i
        while j > 0 and basis[j - 1] > rc:
            basis[j] = basis[j - 1]
            j -= 1
        basis[j] = rc

    # --- initial statuses from residual signs ---------------------------
    for i in range(p):
        for j in range(p):
            XB[i, j] = X[basis[i], j]
        beta[i] = y[basis[i]]
    if _lu_factor(XB, ipiv, p) != 0:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    _lu_solve(XB, ipiv, beta, p)
    for j in range(n):
        acc = 0.0
        for k in range(p):
            acc += X[j, k] * beta[k]
        status[j] = _UB if y[j] - acc > 0.0 else _LB
    for i in range(p):
        status[basis[i]] = _BASIC

    pivots = 0
    for l in range(L):
        tau = taus[l]
        for k in range(p):
            acc = 0.0
            for j in range(n):
                acc += X[j, k]
            cvec[k] = (1.0 - tau) * acc
        bland = 0
        iters = 0
        while True:
            for i in range(p):
                for j in range(p):
                    XB[i, j] = X[basis[i], j]
            if _lu_factor(XB, ipiv, p) != 0:
                raise np.linalg.LinAlgError("numerically singular basis")
            for k in range(p):
                acc = cvec[k]
                for j in range(n):
                    if status[j] == _UB:
                        acc -= X[j, k]
                aB[k] = acc
            _lu_solve_t(XB, ipiv, aB, p)

            # leaving variable: worst bound violation (Bland: least index)
            t = -1
            if bland:
                tmp_i = n
                for i in range(p):
                    if (aB[i] < -_FEAS_TOL or aB[i] > 1.0 + _FEAS_TOL) \
                            and basis[i] < tmp_i:
                        tmp_i = basis[i]
                        t = i
            else:
                vmax = 0.0
                for i in range(p):
                    v = -aB[i] if aB[i] < 0.0 else aB[i] - 1.0
                    if v > _FEAS_TOL and v > vmax:
                        vmax = v
                        t = i
            if t < 0:
                for i in range(p):
                    beta[i] = y[basis[i]]
                _lu_solve(XB, ipiv, beta, p)
                for i in range(p):
                    out[l, i] = beta[i]
                break

            iters += 1
            if iters > budget:
                if bland:
                    raise PivotLimitError(
                        "quantile regression simplex exceeded pivot budget")
                bland = 1
                iters = 0
            case_low = 1 if aB[t] < 0.0 else 0

            for i in range(p):
                beta[i] = y[basis[i]]
                w[i] = 1.0 if i == t else 0.0
            _lu_solve(XB, ipiv, beta, p)
            _lu_solve(XB, ipiv, w, p)
            vmax = 0.0
            for j in range(n):
                acc = 0.0
                piv_v = 0.0
                for k in range(p):
                    acc += X[j, k] * w[k]
                    piv_v += X[j, k] * beta[k]
                alpha[j] = acc
                dred[j] = piv_v - y[j]
                if fabs(acc) > vmax:
                    vmax = fabs(acc)
            ptol = _PIVOT_TOL * (vmax if vmax > 1.0 else 1.0)

            # ratio test pass 1: best ratio among admissible columns
            found = 0
            best = 0.0
            for j in range(n):
                if status[j] == _BASIC:
                    continue
                v = alpha[j]
                if case_low:
                    if not ((status[j] == _LB and v < -ptol)
                            or (status[j] == _UB and v > ptol)):
                        continue
                else:
                    if not ((status[j] == _LB and v > ptol)
                            or (status[j] == _UB and v < -ptol)):
                        continue
                theta = dred[j] / v
                if not found:
                    best = theta
                    found = 1
                elif case_low:
                    if theta > best:
                        best = theta
                else:
                    if theta < best:
                        best = theta
            if not found:
                raise PivotLimitError("no admissible entering variable")

            # pass 2: break ties by largest |alpha| (Bland: least index)
            band = _RATIO_TIE * (1.0 + fabs(best))
            enter = -1
            vmax = -1.0
            for j in range(n):
                if status[j] == _BASIC:
                    continue
                v = alpha[j]
                if case_low:
                    if not ((status[j] == _LB and v < -ptol)
                            or (status[j] == _UB and v > ptol)):
                        continue
                else:
                    if not ((status[j] == _LB and v > ptol)
                            or (status[j] == _UB and v < -ptol)):
                        continue
                theta = dred[j] / v
                if fabs(theta - best) <= band:
                    if bland:
                        enter = j
                        break
                    if fabs(v) > vmax:
                        vmax = fabs(v)
                        enter = j
            if enter < 0:
                raise PivotLimitError("no admissible entering variable")

            status[basis[t]] = _LB if case_low else _UB
            basis[t] = enter
            status[enter] = _BASIC
            pivots += 1

    return pivots
