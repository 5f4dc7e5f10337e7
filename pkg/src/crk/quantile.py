"""Empirical distribution primitives and exact linear quantile regression.

Quantiles follow the type-1 (generalized inverse) convention throughout:
the u-th quantile of a sample of size n is the ceil(u*n)-th order
statistic, i.e. inf{y : F_hat(y) >= u}.  Regression quantiles minimize
the pinball loss exactly; because minimizers can be set-valued, callers
should compare achieved losses rather than coefficients.
"""

from itertools import combinations

import numpy as np

from ._backend import qr_path


def as_sample(values) -> np.ndarray:
    """Validate and return outcome values as a 1-d float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("sample must be a nonempty 1-d sequence")
    if not np.isfinite(arr).all():
        raise ValueError("sample contains non-finite values")
    return arr


def as_design(X, n: int | None = None) -> np.ndarray:
    """Validate a design matrix: 2-d, finite, n >= p >= 1."""
    mat = np.asarray(X, dtype=float)
    if mat.ndim != 2:
        raise ValueError("design matrix must be 2-d")
    rows, cols = mat.shape
    if cols < 1 or rows < cols:
        raise ValueError(f"design matrix needs n >= p >= 1, got {rows} x {cols}")
    if n is not None and rows != n:
        raise ValueError(f"design has {rows} rows but sample has {n}")
    if not np.isfinite(mat).all():
        raise ValueError("design matrix contains non-finite values")
    return mat


def validate_grid(points) -> np.ndarray:
    """Validate a quantile grid: strictly increasing, inside (0, 1)."""
    grid = np.asarray(points, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("quantile grid must be a nonempty 1-d sequence")
    if not (np.isfinite(grid).all() and grid[0] > 0.0 and grid[-1] < 1.0):
        raise ValueError("grid points must lie strictly inside (0, 1)")
    if grid.size > 1 and not (np.diff(grid) > 0.0).all():
        raise ValueError("grid points must be strictly increasing")
    return grid


def empirical_cdf(sample, y: float) -> float:
    """Fraction of sample values <= y (right-continuous step function)."""
    s = as_sample(sample)
    return float(np.count_nonzero(s <= y)) / s.size


def empirical_quantile(sample, u: float) -> float:
    """Type-1 empirical quantile, u in (0, 1]."""
    s = as_sample(sample)
    if not 0.0 < u <= 1.0:
        raise ValueError(f"quantile level must be in (0, 1], got {u}")
    return float(np.quantile(s, u, method="inverted_cdf"))


def empirical_quantiles(sample, us) -> np.ndarray:
    """Vectorized type-1 quantiles at each level in `us`."""
    s = as_sample(sample)
    levels = np.asarray(us, dtype=float)
    if levels.size and not ((levels > 0.0).all() and (levels <= 1.0).all()):
        raise ValueError("quantile levels must be in (0, 1]")
    return np.quantile(s, levels, method="inverted_cdf")


def pinball_loss(residuals, u: float) -> float:
    """Sum of check-function values rho_u(r) = r * (u - 1{r < 0})."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {u}")
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(r * (u - (r < 0.0))))


def fit_qr(y, X, u: float) -> np.ndarray:
    """Exact quantile-regression coefficients at level u.

    The achieved pinball loss equals the global minimum; the coefficient
    vector itself is one element of the (possibly set-valued) argmin.
    """
    return fit_qr_process(y, X, [u])[0]


def fit_qr_process(y, X, taus) -> np.ndarray:
    """Exact quantile-regression coefficients at each grid level.

    Returns a (len(taus), p) array.  Levels are solved in the given
    order with warm starts, so an increasing grid is cheapest.
    """
    yv = as_sample(y)
    Xm = as_design(X, yv.size)
    tv = np.asarray(taus, dtype=float)
    if tv.ndim != 1 or tv.size == 0:
        raise ValueError("taus must be a nonempty 1-d sequence")
    if not ((tv > 0.0).all() and (tv < 1.0).all()):
        raise ValueError("regression quantile levels must be in (0, 1)")
    return qr_path(yv, Xm, tv)


def qr_oracle_bruteforce(y, X, u: float, max_n: int = 20, max_p: int = 3) -> np.ndarray:
    """Independent oracle: exhaustive search over interpolating solutions.

    Some exact quantile-regression solution interpolates p observations,
    so enumerating every invertible p-subset and keeping the candidate
    with minimal pinball loss yields the global minimum.  Exponential in
    n; guarded to toy sizes.
    """
    yv = as_sample(y)
    Xm = as_design(X, yv.size)
    n, p = Xm.shape
    if n > max_n or p > max_p:
        raise ValueError(f"brute-force oracle limited to n <= {max_n}, p <= {max_p}")
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {u}")
    best_loss = np.inf
    best_beta = None
    for subset in combinations(range(n), p):
        sub = Xm[list(subset)]
        if abs(np.linalg.det(sub)) <= 1e-12 * max(1.0, np.abs(sub).max()) ** p:
            continue
        beta = np.linalg.solve(sub, yv[list(subset)])
        loss = pinball_loss(yv - Xm @ beta, u)
        if loss < best_loss:
            best_loss = loss
            best_beta = beta
    if best_beta is None:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    return best_beta
