"""Between-cluster CRK test: matched pairs and combined p-values.

When the parameter is identified by comparing a treated cluster with a
control cluster, every injective assignment h of treated to control
clusters yields a valid estimate vector with independent rows, but
different h share clusters and are dependent.  Rather than privileging
one assignment, the test computes the randomization p-value for every
assignment in a (sub)set of matchings and rejects when twice the
average p-value is below alpha, which is valid under arbitrary
dependence as long as each p-value is superuniform and the matching set
is chosen independently of the data.
"""

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .quantile import fit_qr_process, validate_grid
from .randomization import (
    EstimateProcess,
    GroupConfig,
    SignGroup,
    randomization_pvalue,
)
from .within import ClusterDataset, resolve_null

_COMBINERS = ("twice_mean", "bonferroni", "geometric_e")


@dataclass(frozen=True)
class Matching:
    """Injective pairing of treated with control clusters.

    `pairs` lists (treated_index, control_index) rows; the shorter side
    appears in natural order and the longer side is permuted, so the
    assembled process always has min(q1, q0) independent rows.
    """

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(j), int(k)) for j, k in self.pairs)
        if not pairs:
            raise ValueError("matching must contain at least one pair")
        treated = [j for j, _ in pairs]
        control = [k for _, k in pairs]
        if len(set(treated)) != len(treated) or len(set(control)) != len(control):
            raise ValueError("matching must use each cluster at most once")
        object.__setattr__(self, "pairs", pairs)

    @property
    def size(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MatchingSet:
    """A collection of matchings, exhaustive or sampled without replacement."""

    members: tuple[Matching, ...]
    mode: str  # "exhaustive" | "sampled"
    seed: int | None = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("matching set must be nonempty")
        if self.mode not in ("exhaustive", "sampled"):
            raise ValueError(f"unknown matching mode {self.mode!r}")
        sizes = {m.size for m in members}
        if len(sizes) != 1:
            raise ValueError("all matchings must pair the same number of clusters")
        if len(set(members)) != len(members):
            raise ValueError("matchings must be distinct")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)


def matching_count(q1: int, q0: int) -> int:
    """Number of injective assignments of the smaller side into the larger."""
    if q1 < 1 or q0 < 1:
        raise ValueError("need at least one treated and one control cluster")
    hi, lo = max(q1, q0), min(q1, q0)
    return math.perm(hi, lo)


def _matching_from_perm(perm: tuple[int, ...], flip: bool) -> Matching:
    if flip:  # more treated than controls: permute treated, controls fixed
        return Matching(pairs=tuple((j, k) for k, j in enumerate(perm)))
    return Matching(pairs=tuple((j, k) for j, k in enumerate(perm)))


def enumerate_matchings(q1: int, q0: int, limit: int = 10**6) -> MatchingSet:
    """All injective matchings in a deterministic order."""
    total = matching_count(q1, q0)
    if total > limit:
        raise ValueError(
            f"{total} matchings exceed the enumeration limit {limit}; "
            "use sample_matchings"
        )
    flip = q1 > q0
    hi, lo = max(q1, q0), min(q1, q0)
    members = tuple(
        _matching_from_perm(perm, flip) for perm in permutations(range(hi), lo)
    )
    return MatchingSet(members=members, mode="exhaustive")


def _random_matchings(q1: int, q0: int, count: int, rng) -> list[Matching]:
    """Distinct uniform matchings; count >= 1, no data dependence."""
    total = matching_count(q1, q0)
    if not 1 <= count <= total:
        raise ValueError(f"cannot draw {count} distinct matchings from {total}")
    flip = q1 > q0
    hi, lo = max(q1, q0), min(q1, q0)
    if total <= 200_000:
        all_perms = list(permutations(range(hi), lo))
        picks = rng.choice(total, size=count, replace=False)
        return [_matching_from_perm(all_perms[i], flip) for i in picks]
    seen: dict[tuple[int, ...], None] = {}
    while len(seen) < count:
        perm = tuple(int(v) for v in rng.permutation(hi)[:lo])
        seen.setdefault(perm, None)
    return [_matching_from_perm(perm, flip) for perm in seen]


def sample_matchings(q1: int, q0: int, count: int, seed=None) -> MatchingSet:
    """`count` distinct matchings drawn uniformly without replacement.

    The draw only depends on the seed, never on data; validity of the
    combined test requires the subset to be data independent.
    """
    if count < 2:
        raise ValueError("a sampled matching set needs at least two members")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    members = tuple(_random_matchings(q1, q0, count, rng))
    stored_seed = seed if isinstance(seed, int) else None
    return MatchingSet(members=members, mode="sampled", seed=stored_seed)


@dataclass(eq=False)
class PairwiseEstimates:
    """Grid functions delta_hat_{j,k}, one per (treated, control) pair."""

    grid: np.ndarray
    values: dict[tuple[int, int], np.ndarray]
    treated_ids: tuple[str, ...] = ()
    control_ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.grid = validate_grid(self.grid)
        checked = {}
        for key, row in self.values.items():
            arr = np.asarray(row, dtype=float)
            if arr.shape != self.grid.shape:
                raise ValueError(f"pair {key}: estimate length != grid length")
            if not np.isfinite(arr).all():
                raise ValueError(f"pair {key}: non-finite estimate")
            checked[(int(key[0]), int(key[1]))] = arr
        self.values = checked


def assemble_matched_process(
    pairs: PairwiseEstimates, matching: Matching, grid=None
) -> EstimateProcess:
    """Stack the pairwise estimates selected by one matching."""
    gridv = pairs.grid if grid is None else validate_grid(grid)
    if grid is not None and not np.array_equal(gridv, pairs.grid):
        raise ValueError("grid does not match the pairwise estimates")
    rows = []
    for j, k in matching.pairs:
        if (j, k) not in pairs.values:
            raise KeyError(f"pairwise estimate missing for pair ({j}, {k})")
        rows.append(pairs.values[(j, k)])
    return EstimateProcess(values=np.vstack(rows), grid=gridv)


def combine_pvalues(pvals, method: str = "twice_mean") -> float:
    """Combine dependent p-values into one decision value.

    twice_mean returns 2/H * sum(p) unclamped (validity needs H >= 2);
    bonferroni returns min(1, H * min p); geometric_e returns
    min(1, e * geometric mean).
    """
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("need at least one p-value")
    if not ((p >= 0.0).all() and (p <= 1.0).all()):
        raise ValueError("p-values must lie in [0, 1]")
    if method == "twice_mean":
        if p.size < 2:
            raise ValueError("twice_mean requires at least two p-values")
        return float(2.0 * p.mean())
    if method == "bonferroni":
        return float(min(1.0, p.size * p.min()))
    if method == "geometric_e":
        with np.errstate(divide="ignore"):
            geo = float(np.exp(np.mean(np.log(p)))) if (p > 0.0).all() else 0.0
        return float(min(1.0, math.e * geo))
    raise ValueError(f"unknown combiner {method!r}; choose from {_COMBINERS}")


@dataclass(frozen=True)
class BetweenTestResult:
    """Outcome of the combined between-cluster test."""

    combined: float  # raw combiner output (twice_mean may exceed 1)
    p_value: float  # min(1, combined); two-sided: min(1, 2 * smaller side)
    alpha: float
    direction: str
    reject: bool
    combiner: str
    pvalues_right: tuple[float, ...] | None
    pvalues_left: tuple[float, ...] | None
    n_matchings: int
    group_size: int
    exact_group: bool

    def to_dict(self) -> dict:
        return {
            "combined": self.combined,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "direction": self.direction,
            "reject": self.reject,
            "combiner": self.combiner,
            "pvalues_right": list(self.pvalues_right) if self.pvalues_right else None,
            "pvalues_left": list(self.pvalues_left) if self.pvalues_left else None,
            "n_matchings": self.n_matchings,
            "group_size": self.group_size,
            "exact_group": self.exact_group,
        }


def matching_pvalues(
    pairs: PairwiseEstimates,
    matchings: MatchingSet,
    null=0.0,
    G: SignGroup | None = None,
    negate: bool = False,
) -> tuple[float, ...]:
    """Randomization p-value of the assembled process for each matching."""
    if G is None:
        raise ValueError("a sign group is required")
    gridv = pairs.grid
    null_vec = resolve_null(null, gridv)
    out = []
    for matching in matchings.members:
        X = assemble_matched_process(pairs, matching).centered(null_vec)
        if negate:
            X = X.negated()
        out.append(randomization_pvalue(X, G))
    return tuple(out)


def crk_test_between(
    pairs: PairwiseEstimates,
    matchings: MatchingSet,
    grid=None,
    null=0.0,
    alpha: float = 0.05,
    direction: str = "right",
    group: GroupConfig | SignGroup = GroupConfig(),
    combiner: str = "twice_mean",
) -> BetweenTestResult:
    """Combined CRK test over a set of treated-control matchings.

    One sign group is drawn once and reused across matchings, so the
    map from matching to p-value is deterministic given the seed.
    """
    if matchings.size < 2:
        raise ValueError("the combined test requires at least two matchings")
    if combiner not in _COMBINERS:
        raise ValueError(f"unknown combiner {combiner!r}; choose from {_COMBINERS}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if direction not in ("right", "left", "two_sided"):
        raise ValueError(f"unknown direction {direction!r}")
    gridv = pairs.grid if grid is None else validate_grid(grid)
    if grid is not None and not np.array_equal(gridv, pairs.grid):
        raise ValueError("grid does not match the pairwise estimates")

    q = matchings.members[0].size
    G = group if isinstance(group, SignGroup) else group.resolve(q)
    if G.q != q:
        raise ValueError(f"sign group is over {G.q} clusters but matchings pair {q}")

    p_right = p_left = None
    if direction in ("right", "two_sided"):
        p_right = matching_pvalues(pairs, matchings, null, G, negate=False)
    if direction in ("left", "two_sided"):
        p_left = matching_pvalues(pairs, matchings, null, G, negate=True)

    if direction == "right":
        combined = combine_pvalues(p_right, combiner)
        reject = combined <= alpha
        p_value = min(1.0, combined)
    elif direction == "left":
        combined = combine_pvalues(p_left, combiner)
        reject = combined <= alpha
        p_value = min(1.0, combined)
    else:
        comb_r = combine_pvalues(p_right, combiner)
        comb_l = combine_pvalues(p_left, combiner)
        reject = comb_r <= alpha or comb_l <= alpha  # union rule, level 2*alpha
        combined = min(comb_r, comb_l)
        p_value = min(1.0, 2.0 * combined)

    return BetweenTestResult(
        combined=combined,
        p_value=p_value,
        alpha=alpha,
        direction=direction,
        reject=reject,
        combiner=combiner,
        pvalues_right=p_right,
        pvalues_left=p_left,
        n_matchings=matchings.size,
        group_size=G.size,
        exact_group=G.is_exact,
    )


def split_by_treatment(data: ClusterDataset) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Positions of treated and control clusters (cluster-level flags)."""
    treated, control = [], []
    for pos, cluster in enumerate(data.clusters):
        if cluster.treated is None:
            raise ValueError(
                f"cluster {cluster.cluster_id!r} has no treatment flags"
            )
        if cluster.treated.all():
            treated.append(pos)
        elif not cluster.treated.any():
            control.append(pos)
        else:
            raise ValueError(
                f"cluster {cluster.cluster_id!r} mixes treated and control "
                "observations; between-cluster tests need cluster-level treatment"
            )
    if not treated or not control:
        raise ValueError("need at least one treated and one control cluster")
    return tuple(treated), tuple(control)


def pairwise_treatment_qr(
    data: ClusterDataset,
    grid,
    required_pairs=None,
) -> PairwiseEstimates:
    """Treatment coefficients from quantile regressions on cluster pairs.

    For each (treated j, control k) pair the two clusters are stacked
    and y is regressed on an intercept, the treatment dummy, and the
    clusters' covariates; the dummy's coefficient path is the pairwise
    estimate.  `required_pairs` restricts computation to the pairs a
    matching set actually touches.
    """
    gridv = validate_grid(grid)
    treated_pos, control_pos = split_by_treatment(data)
    if required_pairs is None:
        wanted = [
            (a, b) for a in range(len(treated_pos)) for b in range(len(control_pos))
        ]
    else:
        wanted = sorted(set((int(a), int(b)) for a, b in required_pairs))
    values: dict[tuple[int, int], np.ndarray] = {}
    for a, b in wanted:
        cj = data.clusters[treated_pos[a]]
        ck = data.clusters[control_pos[b]]
        y = np.concatenate([cj.y, ck.y])
        dummy = np.concatenate([np.ones(cj.n), np.zeros(ck.n)])
        blocks = [np.ones(y.size), dummy]
        if cj.covariates is not None or ck.covariates is not None:
            if cj.covariates is None or ck.covariates is None:
                raise ValueError(
                    f"pair ({cj.cluster_id!r}, {ck.cluster_id!r}): covariates "
                    "present in only one cluster"
                )
            blocks.append(np.vstack([cj.covariates, ck.covariates]))
        design = np.column_stack(blocks)
        betas = fit_qr_process(y, design, gridv)
        values[(a, b)] = betas[:, 1]
    return PairwiseEstimates(
        grid=gridv,
        values=values,
        treated_ids=tuple(data.clusters[i].cluster_id for i in treated_pos),
        control_ids=tuple(data.clusters[i].cluster_id for i in control_pos),
    )


def matchings_pairs(matchings: MatchingSet):
    """Distinct (treated, control) pairs touched by a matching set."""
    return sorted({pair for m in matchings.members for pair in m.pairs})
