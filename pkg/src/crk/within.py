"""Within-cluster CRK test: per-cluster estimation and the sign-flip test.

Each cluster separately identifies the quantile function of interest, so
row j of the estimate process is computed from cluster j's data only.
The test centers the estimates at the null function and hands the
result to the randomization machinery; no root-n scaling is applied
because the decision is invariant to positive rescaling.
"""

from dataclasses import dataclass

import numpy as np

from .quantile import (
    as_design,
    as_sample,
    empirical_quantiles,
    fit_qr_process,
    validate_grid,
)
from .randomization import (
    EstimateProcess,
    GroupConfig,
    SignGroup,
    TestResult,
    crk_decision,
)


class MergeAfterAnalysisError(RuntimeError):
    """Raised when merging is attempted after estimates were computed."""


@dataclass(frozen=True)
class Cluster:
    """One cluster: outcomes plus optional covariates and treatment flags."""

    cluster_id: str
    y: np.ndarray
    covariates: np.ndarray | None = None  # (n, k), no intercept column
    treated: np.ndarray | None = None  # (n,) bool

    def __post_init__(self):
        y = as_sample(self.y)
        object.__setattr__(self, "y", y)
        if self.covariates is not None:
            covs = np.asarray(self.covariates, dtype=float)
            if covs.ndim != 2 or covs.shape[0] != y.size:
                raise ValueError(
                    f"cluster {self.cluster_id!r}: covariates must be n x k with n={y.size}"
                )
            if not np.isfinite(covs).all():
                raise ValueError(
                    f"cluster {self.cluster_id!r}: covariates contain non-finite values"
                )
            object.__setattr__(self, "covariates", covs)
        if self.treated is not None:
            flags = np.asarray(self.treated, dtype=bool)
            if flags.shape != (y.size,):
                raise ValueError(
                    f"cluster {self.cluster_id!r}: treatment flags must match y length"
                )
            object.__setattr__(self, "treated", flags)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class ClusterDataset:
    """Ordered collection of clusters with unique ids."""

    clusters: tuple[Cluster, ...]

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if len(clusters) < 2:
            raise ValueError("need at least two clusters")
        ids = [c.cluster_id for c in clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("cluster ids must be unique")
        object.__setattr__(self, "clusters", clusters)

    @property
    def q(self) -> int:
        return len(self.clusters)

    @property
    def cluster_ids(self) -> tuple[str, ...]:
        return tuple(c.cluster_id for c in self.clusters)


@dataclass(frozen=True)
class EstimatorSpec:
    """Which per-cluster quantile function to estimate.

    kind "unconditional_quantile" uses the empirical quantile of y;
    "qr_coefficient" runs a quantile regression on the cluster's
    covariates (plus an intercept unless add_intercept=False) and keeps
    the coefficient at target_column of the full design;
    "qte_within_pair" takes treated-minus-control empirical quantile
    differences inside the cluster.
    """

    kind: str
    target_column: int = 1
    add_intercept: bool = True

    _KINDS = ("unconditional_quantile", "qr_coefficient", "qte_within_pair")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "qr_coefficient" and self.target_column < 0:
            raise ValueError("target_column must be nonnegative")


def resolve_null(null, grid) -> np.ndarray:
    """Null function as a length-L vector (scalars broadcast)."""
    gridv = validate_grid(grid)
    arr = np.asarray(null, dtype=float)
    if arr.ndim == 0:
        arr = np.full(gridv.shape[0], float(arr))
    if arr.shape != gridv.shape:
        raise ValueError(
            f"null function has {arr.shape[0]} values for {gridv.shape[0]} grid points"
        )
    if not np.isfinite(arr).all():
        raise ValueError("null function must be finite")
    return arr


def _design(cluster: Cluster, spec: EstimatorSpec) -> np.ndarray:
    if cluster.covariates is None:
        raise ValueError(
            f"cluster {cluster.cluster_id!r}: estimator requires covariates"
        )
    if spec.add_intercept:
        mat = np.column_stack([np.ones(cluster.n), cluster.covariates])
    else:
        mat = cluster.covariates
    if cluster.n < mat.shape[1]:
        raise ValueError(
            f"cluster {cluster.cluster_id!r}: {cluster.n} observations are too few "
            f"for a {mat.shape[1]}-column design"
        )
    if spec.target_column >= mat.shape[1]:
        raise ValueError(
            f"cluster {cluster.cluster_id!r}: target column {spec.target_column} "
            f"out of range for {mat.shape[1]} coefficients"
        )
    return as_design(mat, cluster.n)


def _estimate_one(cluster: Cluster, spec: EstimatorSpec, grid: np.ndarray) -> np.ndarray:
    if spec.kind == "unconditional_quantile":
        return np.asarray(empirical_quantiles(cluster.y, grid), dtype=float)
    if spec.kind == "qr_coefficient":
        design = _design(cluster, spec)
        try:
            betas = fit_qr_process(cluster.y, design, grid)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"cluster {cluster.cluster_id!r}: {exc}"
            ) from exc
        return betas[:, spec.target_column]
    # qte_within_pair
    if cluster.treated is None:
        raise ValueError(
            f"cluster {cluster.cluster_id!r}: treatment flags required for "
            "within-pair quantile treatment effects"
        )
    y1 = cluster.y[cluster.treated]
    y0 = cluster.y[~cluster.treated]
    if y1.size == 0 or y0.size == 0:
        raise ValueError(
            f"cluster {cluster.cluster_id!r}: both treated and control "
            "observations are required"
        )
    return np.asarray(
        empirical_quantiles(y1, grid) - empirical_quantiles(y0, grid), dtype=float
    )


def estimate_per_cluster(
    data: ClusterDataset, spec: EstimatorSpec, grid
) -> EstimateProcess:
    """Stack per-cluster estimates into a q x L process on the grid.

    A failure in any one cluster aborts the whole estimation: silently
    dropping a cluster would change q and with it the meaning of the
    null hypothesis.
    """
    gridv = validate_grid(grid)
    rows = [_estimate_one(c, spec, gridv) for c in data.clusters]
    return EstimateProcess(values=np.vstack(rows), grid=gridv)


def merge_clusters(data: ClusterDataset, plan) -> ClusterDataset:
    """Merge groups of clusters into single clusters.

    `plan` is a sequence of cluster-id groups; each group becomes one
    cluster whose id is the lexicographic join of the member ids and
    whose observations are concatenated in that id order.  Clusters not
    named in the plan pass through unchanged; a merged cluster takes
    the position of its first member.
    """
    by_id = {c.cluster_id: c for c in data.clusters}
    group_of: dict[str, int] = {}
    groups: list[list[str]] = []
    for group in plan:
        members = list(group)
        if not members:
            raise ValueError("empty merge group")
        for cid in members:
            if cid not in by_id:
                raise ValueError(f"unknown cluster id {cid!r} in merge plan")
            if cid in group_of:
                raise ValueError(f"cluster id {cid!r} appears in two merge groups")
            group_of[cid] = len(groups)
        groups.append(sorted(members))

    def _merge(members: list[str]) -> Cluster:
        parts = [by_id[cid] for cid in members]
        y = np.concatenate([c.y for c in parts])
        has_cov = [c.covariates is not None for c in parts]
        if any(has_cov) and not all(has_cov):
            raise ValueError(
                f"merge group {members}: covariates present in only some clusters"
            )
        covs = (
            np.vstack([c.covariates for c in parts]) if all(has_cov) else None
        )
        has_flags = [c.treated is not None for c in parts]
        if any(has_flags) and not all(has_flags):
            raise ValueError(
                f"merge group {members}: treatment flags present in only some clusters"
            )
        treated = (
            np.concatenate([c.treated for c in parts]) if all(has_flags) else None
        )
        return Cluster(
            cluster_id="+".join(members), y=y, covariates=covs, treated=treated
        )

    emitted: set[int] = set()
    out: list[Cluster] = []
    for cluster in data.clusters:
        gid = group_of.get(cluster.cluster_id)
        if gid is None:
            out.append(cluster)
        elif gid not in emitted:
            emitted.add(gid)
            out.append(_merge(groups[gid]))
    return ClusterDataset(clusters=tuple(out))


def crk_test_within(
    data: ClusterDataset,
    spec: EstimatorSpec,
    grid,
    null=0.0,
    alpha: float = 0.05,
    direction: str = "right",
    group: GroupConfig | SignGroup = GroupConfig(),
    left_rule: str = "negate",
) -> TestResult:
    """Estimate per cluster, center at the null, run the sign-flip test."""
    gridv = validate_grid(grid)
    delta = estimate_per_cluster(data, spec, gridv)
    X = delta.centered(resolve_null(null, gridv))
    G = group if isinstance(group, SignGroup) else group.resolve(data.q)
    return crk_decision(X, G, alpha, direction=direction, left_rule=left_rule)


class Session:
    """Within-cluster analysis with pre-analysis ordering enforced.

    Merging clusters is a design decision that must be fixed before any
    estimates are seen, so the session refuses to merge once an
    estimate or test has been computed through it.
    """

    def __init__(self, data: ClusterDataset):
        self._data = data
        self._analyzed = False

    @property
    def data(self) -> ClusterDataset:
        return self._data

    def merge(self, plan) -> "Session":
        if self._analyzed:
            raise MergeAfterAnalysisError(
                "cluster merging must be declared before estimates are computed"
            )
        self._data = merge_clusters(self._data, plan)
        return self

    def estimate(self, spec: EstimatorSpec, grid) -> EstimateProcess:
        self._analyzed = True
        return estimate_per_cluster(self._data, spec, grid)

    def test_within(self, spec: EstimatorSpec, grid, **kwargs) -> TestResult:
        self._analyzed = True
        return crk_test_within(self._data, spec, grid, **kwargs)
