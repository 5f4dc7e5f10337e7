"""Sign-flip randomization inference on cluster-level estimate processes.

The object under test is a q x L matrix of per-cluster estimates on a
quantile grid.  Under the null the rows are symmetric about zero, so the
statistic T (largest grid value of the cluster average) has the same
distribution as T(gX) for every sign vector g in {-1, +1}^q.  Critical
values and p-values are read off the randomization distribution
{T(gX) : g in G}, either over the full group or over i.i.d. draws from
it ("stochastic approximation").

Tie handling matters: T(X) and every T(gX) are computed through one
matrix product so that exact ties (the identity element, symmetric
integer fixtures) compare equal bit-for-bit.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .quantile import validate_grid

logger = logging.getLogger(__name__)

_DIRECTIONS = ("right", "left", "two_sided")


@dataclass(frozen=True)
class EstimateProcess:
    """Per-cluster estimates evaluated on a quantile grid (rows = clusters)."""

    values: np.ndarray  # (q, L)
    grid: np.ndarray  # (L,)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        grid = validate_grid(self.grid)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("process values must be a q x L matrix with q >= 1")
        if values.shape[1] != grid.shape[0]:
            raise ValueError(
                f"process has {values.shape[1]} columns but grid has {grid.shape[0]} points"
            )
        if not np.isfinite(values).all():
            raise ValueError("process values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid", grid)

    @property
    def q(self) -> int:
        return self.values.shape[0]

    def centered(self, null_values) -> "EstimateProcess":
        """Process minus a null function (scalar or length-L vector)."""
        null = np.asarray(null_values, dtype=float)
        return replace(self, values=self.values - null)

    def negated(self) -> "EstimateProcess":
        return replace(self, values=-self.values)


@dataclass(frozen=True)
class SignGroup:
    """The group {-1, +1}^q, fully enumerated or sampled with replacement."""

    members: np.ndarray  # (M, q) of +/-1
    mode: str  # "exact" | "sampled"
    seed: int | None = None

    def __post_init__(self):
        members = np.ascontiguousarray(self.members, dtype=float)
        if members.ndim != 2 or members.shape[0] < 1:
            raise ValueError("sign group needs at least one member")
        if not np.isin(members, (-1.0, 1.0)).all():
            raise ValueError("sign vectors must have entries in {-1, +1}")
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"unknown sign group mode {self.mode!r}")
        if self.mode == "exact" and members.shape[0] != 2 ** members.shape[1]:
            raise ValueError("exact mode requires all 2^q sign vectors")
        object.__setattr__(self, "members", members)

    @property
    def q(self) -> int:
        return self.members.shape[1]

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.mode == "exact"


def enumerate_sign_group(q: int) -> SignGroup:
    """All 2^q sign vectors, identity (all +1) first, in a fixed order."""
    if not 1 <= q <= 20:
        raise ValueError(
            f"full enumeration needs 1 <= q <= 20 (got q={q}); "
            "use sample_sign_group for larger q"
        )
    codes = np.arange(2**q, dtype=np.int64)[:, None] >> np.arange(q)
    members = 1.0 - 2.0 * (codes & 1)
    return SignGroup(members=members, mode="exact")


def sample_sign_group(q: int, m: int, seed=None) -> SignGroup:
    """m i.i.d. uniform draws from {-1, +1}^q (with replacement)."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if m < 1:
        raise ValueError(f"need at least one draw, got m={m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    members = 2.0 * rng.integers(0, 2, size=(m, q)) - 1.0
    stored_seed = seed if isinstance(seed, int) else None
    return SignGroup(members=members, mode="sampled", seed=stored_seed)


@dataclass(frozen=True)
class GroupConfig:
    """How to build the sign group for a test.

    mode "auto" enumerates when 2^q is affordable (q <= exact_cap) and
    falls back to sampling `draws` vectors otherwise.
    """

    mode: str = "auto"  # "auto" | "exact" | "sampled"
    draws: int = 9999
    seed: int | None = None
    exact_cap: int = 14

    def resolve(self, q: int, rng=None) -> SignGroup:
        if self.mode not in ("auto", "exact", "sampled"):
            raise ValueError(f"unknown group mode {self.mode!r}")
        mode = self.mode
        if mode == "auto":
            mode = "exact" if q <= self.exact_cap else "sampled"
        if mode == "exact":
            return enumerate_sign_group(q)
        return sample_sign_group(q, self.draws, rng if rng is not None else self.seed)


def _t_with_identity(members: np.ndarray, values: np.ndarray):
    """(T(X), T(gX) for each member), all through one matrix product."""
    q = values.shape[0]
    stacked = np.vstack((np.ones((1, q)), members))
    t = (stacked @ values).max(axis=1) / q
    return float(t[0]), t[1:]


def ks_statistic(X: EstimateProcess) -> float:
    """Largest grid value of the cluster-average process."""
    t_x, _ = _t_with_identity(np.empty((0, X.q)), X.values)
    return t_x


def apply_signs(X: EstimateProcess, g) -> EstimateProcess:
    """Flip each cluster row by the corresponding sign."""
    signs = np.asarray(g, dtype=float).reshape(-1)
    if signs.shape[0] != X.q:
        raise ValueError(f"sign vector length {signs.shape[0]} != q={X.q}")
    if not np.isin(signs, (-1.0, 1.0)).all():
        raise ValueError("sign vector entries must be in {-1, +1}")
    return replace(X, values=signs[:, None] * X.values)


def randomization_distribution(X: EstimateProcess, G: SignGroup) -> np.ndarray:
    """Sorted values of T(gX) over the group members (duplicates kept)."""
    if G.q != X.q:
        raise ValueError(f"group is over {G.q} clusters but process has {X.q}")
    _, t_all = _t_with_identity(G.members, X.values)
    return np.sort(t_all)


def critical_value(dist, alpha: float) -> float:
    """ceil((1-alpha)*N)-th smallest element of the distribution."""
    values = np.asarray(dist, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("distribution must be a nonempty 1-d sequence")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = values.size
    # tiny slack so an exactly-integer (1-alpha)*N is not pushed up by rounding
    k = int(np.ceil((1.0 - alpha) * n - 1e-12))
    k = min(max(k, 1), n)
    return float(np.sort(values)[k - 1])


def randomization_pvalue(
    X: EstimateProcess, G: SignGroup, add_identity: bool = False
) -> float:
    """Fraction of group members g with T(gX) >= T(X), ties included.

    With `add_identity` the identity element is counted as one extra
    draw, a conservative variant for sampled groups; the default raw
    average is the unbiased estimate of the full-group p-value.
    """
    if G.q != X.q:
        raise ValueError(f"group is over {G.q} clusters but process has {X.q}")
    t_x, t_all = _t_with_identity(G.members, X.values)
    count = int(np.count_nonzero(t_all >= t_x))
    if add_identity and not G.is_exact:
        return (count + 1) / (G.size + 1)
    return count / G.size


@dataclass(frozen=True)
class TestResult:
    """Outcome of one randomization test."""

    statistic: float
    critical_value: float
    p_value: float
    alpha: float
    direction: str
    reject: bool
    group_size: int
    exact_group: bool

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")
        if self.exact_group and self.p_value < 1.0 / self.group_size - 1e-12:
            raise ValueError("exact-group p-value below 1/|G|")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "direction": self.direction,
            "reject": self.reject,
            "group_size": self.group_size,
            "exact_group": self.exact_group,
        }


def _one_sided(X: EstimateProcess, G: SignGroup, alpha: float):
    t_x, t_all = _t_with_identity(G.members, X.values)
    cv = critical_value(t_all, alpha)
    p = int(np.count_nonzero(t_all >= t_x)) / G.size
    return t_x, cv, p, t_x > cv


def crk_decision(
    X: EstimateProcess,
    G: SignGroup,
    alpha: float,
    direction: str = "right",
    left_rule: str = "negate",
) -> TestResult:
    """Randomization test decision for one estimate process.

    direction "right" rejects when T(X) exceeds the 1-alpha group
    quantile; "left" applies the same rule to -X (set
    left_rule="lower_quantile" for the variant comparing T(X) against
    the alpha group quantile instead, which is not identical for
    process-valued data); "two_sided" rejects when either one-sided
    test at level alpha does, i.e. at level 2*alpha, and reports
    p = min(1, 2*min(p_right, p_left)).
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if left_rule not in ("negate", "lower_quantile"):
        raise ValueError(f"unknown left rule {left_rule!r}")

    if direction == "right":
        stat, cv, p, reject = _one_sided(X, G, alpha)
    elif direction == "left":
        if left_rule == "negate":
            stat, cv, p, reject = _one_sided(X.negated(), G, alpha)
        else:
            t_x, t_all = _t_with_identity(G.members, X.values)
            n = G.size
            k = int(np.ceil(alpha * n - 1e-12))
            k = min(max(k, 1), n)
            cv = float(np.sort(t_all)[k - 1])
            stat = t_x
            reject = t_x < cv
            p = int(np.count_nonzero(t_all <= t_x)) / n
    else:
        stat, cv, p_r, rej_r = _one_sided(X, G, alpha)
        _, _, p_l, rej_l = _one_sided(X.negated(), G, alpha)
        reject = rej_r or rej_l
        p = min(1.0, 2.0 * min(p_r, p_l))

    return TestResult(
        statistic=stat,
        critical_value=cv,
        p_value=p,
        alpha=alpha,
        direction=direction,
        reject=reject,
        group_size=G.size,
        exact_group=G.is_exact,
    )


def randomized_test_weight(X: EstimateProcess, G: SignGroup, alpha: float) -> float:
    """Boundary weight a(X) of the exact (randomized) test.

    Defined for the full group only: a(X) spreads the remaining
    rejection mass over the members tied at the 1-alpha group quantile
    so that the randomized test rejects with probability exactly alpha
    under symmetry.  Clamped to [0, 1]; clamping is logged because it
    only occurs when alpha*|G| is smaller than the strict-rejection
    count, a configuration the defining identity does not cover.
    """
    if not G.is_exact:
        raise ValueError("the exact randomized test requires the full sign group")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    _, t_all = _t_with_identity(G.members, X.values)
    cv = critical_value(t_all, alpha)
    strict = int(np.count_nonzero(t_all > cv))
    equal = int(np.count_nonzero(t_all == cv))
    a = (G.size * alpha - strict) / equal
    if a < 0.0 or a > 1.0:
        logger.warning("randomized test weight %.6f clamped to [0, 1]", a)
        a = min(max(a, 0.0), 1.0)
    return a


def randomized_test(X: EstimateProcess, G: SignGroup, alpha: float, v: float) -> bool:
    """Exact test decision: compare the randomized test function to v.

    v must be an independent Uniform(0, 1) draw supplied by the caller;
    the test rejects with probability exactly alpha under symmetry.
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"v must be in [0, 1], got {v}")
    t_x, t_all = _t_with_identity(G.members, X.values)
    cv = critical_value(t_all, alpha)
    if t_x > cv:
        phi = 1.0
    elif t_x == cv:
        phi = randomized_test_weight(X, G, alpha)
    else:
        phi = 0.0
    return phi >= v
