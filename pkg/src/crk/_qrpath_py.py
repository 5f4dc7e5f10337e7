"""Pure Python quantile-regression simplex kernel.

Solves min_b sum_i rho_tau(y_i - x_i'b) exactly by running a
bounded-variable dual simplex on the equivalent linear program

    max  y'a   s.t.  X'a = (1 - tau) * X'1,   0 <= a <= 1.

A basis is a set of p observation indices whose sub-design X_B is
invertible; the simplex multiplier of that basis is the coefficient
vector b = X_B^{-1} y_B and the reduced cost of observation j is the
negated residual -(y_j - x_j'b).  Starting from any basis, setting each
nonbasic observation to its upper bound when its residual is positive
and to its lower bound otherwise is dual feasible by construction, so
the dual simplex only has to repair primal feasibility of a_B.  Every
pivot moves b to an adjacent interpolating vertex; termination at a
feasible basis is a certificate of global optimality (KKT for the
pinball loss).

The compiled twin in ``_qrpath.pyx`` implements the identical pivot
rules; keep the two in sync.
"""

import numpy as np

_LB, _UB, _BASIC = 0, 1, 2

_FEAS_TOL = 1e-9  # bound violation tolerance on a_B
_PIVOT_TOL = 1e-11  # minimum relative pivot magnitude
_RATIO_TIE = 1e-9  # relative tie band in the ratio test


class PivotLimitError(RuntimeError):
    """Simplex did not terminate within the pivot budget."""


def _initial_basis(X):
    """Select p independent observation rows by complete-pivot elimination.

    Returns the chosen row indices; raises if X is rank deficient.
    """
    n, p = X.shape
    work = np.array(X.T, dtype=float)  # p x n, destroyed
    cols = np.arange(n)
    scale = np.abs(work).max(initial=0.0)
    tol = max(n, p) * np.finfo(float).eps * max(scale, 1.0)
    for k in range(p):
        sub = np.abs(work[k:, k:])
        flat = int(np.argmax(sub))
        i = k + flat // (n - k)
        j = k + flat % (n - k)
        if sub[i - k, j - k] <= tol:
            raise np.linalg.LinAlgError("design matrix is rank deficient")
        if i != k:
            work[[k, i], :] = work[[i, k], :]
        if j != k:
            work[:, [k, j]] = work[:, [j, k]]
            cols[[k, j]] = cols[[j, k]]
        piv = work[k, k]
        if k + 1 < p:
            factors = work[k + 1 :, k] / piv
            work[k + 1 :, k:] -= np.outer(factors, work[k, k:])
    return np.sort(cols[:p])


def _solve_tau(y, X, tau, basis, status, max_iter):
    """One dual-simplex solve; mutates basis/status in place.

    Returns (beta, pivots).  basis/status must already describe a dual
    feasible configuration (statuses consistent with residual signs).
    """
    n, p = X.shape
    c = (1.0 - tau) * X.sum(axis=0)
    bland = False
    pivots = 0
    iters = 0
    while True:
        XB = X[basis]
        yB = y[basis]
        ub_rows = status == _UB
        rhs = c - X[ub_rows].sum(axis=0)
        a_B = np.linalg.solve(XB.T, rhs)

        below = a_B < -_FEAS_TOL
        above = a_B > 1.0 + _FEAS_TOL
        if not below.any() and not above.any():
            return np.linalg.solve(XB, yB), pivots

        iters += 1
        if iters > max_iter:
            if bland:
                raise PivotLimitError(
                    "quantile regression simplex exceeded pivot budget"
                )
            bland = True  # anti-cycling fallback: least-index rule
            iters = 0

        viol = np.where(below, -a_B, 0.0)
        viol = np.where(above, a_B - 1.0, viol)
        if bland:
            cand = np.flatnonzero(viol > 0.0)
            t = int(cand[np.argmin(basis[cand])])
        else:
            t = int(np.argmax(viol))
        case_low = bool(below[t])

        e_t = np.zeros(p)
        e_t[t] = 1.0
        sol = np.linalg.solve(XB, np.column_stack((yB, e_t)))
        beta, w = sol[:, 0], sol[:, 1]
        alpha = X @ w
        d = X @ beta - y  # reduced costs, = -residuals

        at_lb = status == _LB
        at_ub = status == _UB
        ptol = _PIVOT_TOL * max(1.0, float(np.abs(alpha).max()))
        if case_low:
            elig = (at_lb & (alpha < -ptol)) | (at_ub & (alpha > ptol))
        else:
            elig = (at_lb & (alpha > ptol)) | (at_ub & (alpha < -ptol))
        idx = np.flatnonzero(elig)
        if idx.size == 0:
            raise PivotLimitError("no admissible entering variable")
        theta = d[idx] / alpha[idx]
        if case_low:
            best = float(theta.max())
        else:
            best = float(theta.min())
        band = _RATIO_TIE * (1.0 + abs(best))
        ties = idx[np.abs(theta - best) <= band]
        if bland:
            enter = int(ties.min())
        else:
            enter = int(ties[np.argmax(np.abs(alpha[ties]))])

        status[basis[t]] = _LB if case_low else _UB
        basis[t] = enter
        status[enter] = _BASIC
        pivots += 1


def qr_path_into(y, X, taus, out, max_iter=0):
    """Fill out[l] with exact pinball-loss minimizers at each taus[l].

    Consecutive taus warm start from the previous optimal basis.
    Returns the total pivot count.
    """
    y = np.ascontiguousarray(y, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    n, p = X.shape
    if max_iter <= 0:
        max_iter = 200 * (n + p) + 2000

    basis = _initial_basis(X)
    status = np.empty(n, dtype=np.int8)
    beta0 = np.linalg.solve(X[basis], y[basis])
    resid = y - X @ beta0
    status[:] = np.where(resid > 0.0, _UB, _LB)
    status[basis] = _BASIC

    pivots = 0
    for l, tau in enumerate(taus):
        beta, piv = _solve_tau(y, X, float(tau), basis, status, max_iter)
        out[l, :] = beta
        pivots += piv
    return pivots
