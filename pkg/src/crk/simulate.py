"""Data-generating processes and Monte Carlo size/power studies.

The cluster DGP draws, for each cluster, K neighborhoods of random size
whose members share both a common shock and a common covariate value:
U = sqrt(rho)*V_k + sqrt(1-rho)*W is standard normal with
intra-neighborhood correlation rho, X is one normal draw per
neighborhood, and the outcome is y = U * (1 + Z) with Z = X^2/3, so the
conditional quantile function is Phi^{-1}(u) * (1 + Z).  Drawing X at
the neighborhood level makes the effective sample size for slope
estimates proportional to K, which is what gives the reference
rejection rates their scale; see the acceptance suite.  Neighborhood
labels are discarded after generation; the test only sees cluster
labels.

Model "qr_covariate" keeps X as an observed covariate with no true
effect (its quantile-regression coefficient is identically zero);
"cluster_treatment" replaces X in the regression with a cluster-level
treatment dummy and optionally shifts treated outcomes.

Every replication derives its own RNG streams from (master_seed,
replication index), so results are reproducible per replication and
invariant to the degree of parallelism.
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .between import (
    _random_matchings,
    MatchingSet,
    crk_test_between,
    enumerate_matchings,
    matching_count,
    matching_pvalues,
    matchings_pairs,
    pairwise_treatment_qr,
    split_by_treatment,
)
from .randomization import GroupConfig
from .within import (
    Cluster,
    ClusterDataset,
    EstimatorSpec,
    crk_test_within,
    merge_clusters,
)

_MODELS = ("qr_covariate", "cluster_treatment")
DEFAULT_GRID = tuple(np.round(np.arange(1, 10) * 0.1, 10))


@dataclass(frozen=True)
class DgpConfig:
    """Cluster data-generating process parameters."""

    q: int = 10
    neighborhoods: int = 10  # K per cluster
    rho: float = 0.5  # intra-neighborhood correlation
    size_range: tuple[int, int] = (5, 15)  # uniform neighborhood sizes
    model: str = "qr_covariate"
    treat_shift: float = 0.0  # added to treated outcomes (cluster_treatment)
    treated_count: int | None = None  # default floor(q/2)

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("need at least two clusters")
        if self.neighborhoods < 1:
            raise ValueError("need at least one neighborhood per cluster")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        lo, hi = self.size_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad neighborhood size range {self.size_range}")
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {_MODELS}")
        if self.treated_count is not None and not 1 <= self.treated_count < self.q:
            raise ValueError("treated_count must leave both groups nonempty")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_cluster_dgp(cfg: DgpConfig, seed=None) -> ClusterDataset:
    """One synthetic dataset; byte-identical for identical seeds."""
    rng = _rng(seed)
    lo, hi = cfg.size_range
    if cfg.model == "cluster_treatment":
        q1 = cfg.treated_count if cfg.treated_count is not None else cfg.q // 2
        treated_set = set(rng.choice(cfg.q, size=q1, replace=False).tolist())
    else:
        treated_set = set()
    clusters = []
    for j in range(cfg.q):
        sizes = rng.integers(lo, hi + 1, size=cfg.neighborhoods)
        n = int(sizes.sum())
        shock = np.repeat(rng.normal(size=cfg.neighborhoods), sizes)
        noise = rng.normal(size=n)
        u = np.sqrt(cfg.rho) * shock + np.sqrt(1.0 - cfg.rho) * noise
        x = np.repeat(rng.normal(size=cfg.neighborhoods), sizes)
        z = x**2 / 3.0
        y = u * (1.0 + z)
        if cfg.model == "qr_covariate":
            clusters.append(
                Cluster(
                    cluster_id=f"c{j:03d}", y=y, covariates=np.column_stack([x, z])
                )
            )
        else:
            is_treated = j in treated_set
            if is_treated:
                y = y + cfg.treat_shift
            clusters.append(
                Cluster(
                    cluster_id=f"c{j:03d}",
                    y=y,
                    covariates=z[:, None],
                    treated=np.full(n, is_treated),
                )
            )
    return ClusterDataset(clusters=tuple(clusters))


@dataclass(frozen=True)
class McStudy:
    """One Monte Carlo experiment: a DGP plus a test configuration."""

    dgp: DgpConfig
    mode: str = "within"  # "within" | "between"
    grid: tuple[float, ...] = DEFAULT_GRID
    null: float = 0.0
    alpha: float = 0.05
    direction: str = "right"
    sign_draws: int | None = 1000  # None: exact group when 2^q is affordable
    estimator_kind: str = "qr_coefficient"  # within mode
    target_column: int = 1  # within mode: tested coefficient
    matching_draws: int | None = 50  # between mode: |I|; None: exhaustive
    combiner: str = "twice_mean"
    replications: int = 1000
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("within", "between", "within_pairs"):
            raise ValueError(f"unknown study mode {self.mode!r}")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.mode != "within" and self.dgp.model != "cluster_treatment":
            raise ValueError(
                f"{self.mode} studies need the cluster_treatment model"
            )
        if self.mode == "within_pairs" and self.dgp.q % 2 != 0:
            raise ValueError("within_pairs studies need an even cluster count")


@dataclass(frozen=True)
class McResult:
    """Rejection tally of a Monte Carlo study."""

    replications: int
    rejections: int
    rejection_rate: float
    mc_stderr: float
    master_seed: int
    config: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def csv_header() -> str:
        return "replications,rejections,rejection_rate,mc_stderr,master_seed"

    def to_csv_row(self) -> str:
        return (
            f"{self.replications},{self.rejections},"
            f"{self.rejection_rate:.6f},{self.mc_stderr:.6f},{self.master_seed}"
        )


def _rep_streams(master_seed: int, rep: int):
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep,))
    data_ss, group_ss, match_ss = seq.spawn(3)
    return (
        np.random.default_rng(data_ss),
        np.random.default_rng(group_ss),
        np.random.default_rng(match_ss),
    )


def _group_config(study: McStudy) -> GroupConfig:
    if study.sign_draws is None:
        return GroupConfig(mode="auto")
    return GroupConfig(mode="sampled", draws=study.sign_draws)


def _between_setup(study: McStudy, data, rng_group, rng_match, n_matchings):
    treated_pos, control_pos = split_by_treatment(data)
    q1, q0 = len(treated_pos), len(control_pos)
    total = matching_count(q1, q0)
    count = total if n_matchings is None else min(n_matchings, total)
    if count >= total:
        matchings = enumerate_matchings(q1, q0)
    else:
        members = tuple(_random_matchings(q1, q0, count, rng_match))
        matchings = MatchingSet(members=members, mode="sampled")
    pairs = pairwise_treatment_qr(
        data, study.grid, required_pairs=matchings_pairs(matchings)
    )
    group = _group_config(study).resolve(min(q1, q0), rng=rng_group)
    return pairs, matchings, group


def _run_rep(study: McStudy, rep: int) -> bool:
    rng_data, rng_group, rng_match = _rep_streams(study.master_seed, rep)
    data = generate_cluster_dgp(study.dgp, rng_data)
    if study.mode in ("within", "within_pairs"):
        if study.mode == "within_pairs":
            # pre-analysis pairing rule: i-th treated with i-th control,
            # in dataset position order
            treated_pos, control_pos = split_by_treatment(data)
            plan = [
                [data.clusters[t].cluster_id, data.clusters[c].cluster_id]
                for t, c in zip(treated_pos, control_pos)
            ]
            data = merge_clusters(data, plan)
            spec = EstimatorSpec(kind="qte_within_pair")
        else:
            spec = EstimatorSpec(
                kind=study.estimator_kind, target_column=study.target_column
            )
        group = _group_config(study).resolve(data.q, rng=rng_group)
        result = crk_test_within(
            data,
            spec,
            study.grid,
            null=study.null,
            alpha=study.alpha,
            direction=study.direction,
            group=group,
        )
        return result.reject
    pairs, matchings, group = _between_setup(
        study, data, rng_group, rng_match, study.matching_draws
    )
    result = crk_test_between(
        pairs,
        matchings,
        null=study.null,
        alpha=study.alpha,
        direction=study.direction,
        group=group,
        combiner=study.combiner,
    )
    return result.reject


def _run_cherry_rep(study: McStudy, rep: int, picks: int) -> bool:
    rng_data, rng_group, rng_match = _rep_streams(study.master_seed, rep)
    data = generate_cluster_dgp(study.dgp, rng_data)
    treated_pos, control_pos = split_by_treatment(data)
    q1, q0 = len(treated_pos), len(control_pos)
    members = tuple(_random_matchings(q1, q0, picks, rng_match))
    matchings = MatchingSet(members=members, mode="sampled")
    pairs = pairwise_treatment_qr(
        data, study.grid, required_pairs=matchings_pairs(matchings)
    )
    group = _group_config(study).resolve(min(q1, q0), rng=rng_group)
    pvals = matching_pvalues(
        pairs, matchings, study.null, group, negate=study.direction == "left"
    )
    return min(pvals) <= study.alpha


def _with_rep_context(fn, study: McStudy, rep: int, *extra):
    """Run one replication; failures cite the replication and seed."""
    try:
        return fn(study, rep, *extra)
    except Exception as exc:
        note = f"replication {rep} (master seed {study.master_seed}): {exc}"
        try:
            wrapped = type(exc)(note)
        except TypeError:
            wrapped = RuntimeError(note)
        raise wrapped from exc


def _mc_worker(args):
    study, rep = args
    return _with_rep_context(_run_rep, study, rep)


def _cherry_worker(args):
    study, rep, picks = args
    return _with_rep_context(_run_cherry_rep, study, rep, picks)


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("CRK_THREADS", "1") or "1")
    return max(1, workers)


def _tally(worker, jobs, workers: int) -> int:
    if workers <= 1:
        return sum(worker(job) for job in jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(worker, jobs, chunksize=16))


def _result(study: McStudy, rejections: int, extra: dict | None = None) -> McResult:
    reps = study.replications
    rate = rejections / reps
    config = asdict(study)
    if extra:
        config.update(extra)
    return McResult(
        replications=reps,
        rejections=rejections,
        rejection_rate=rate,
        mc_stderr=float(np.sqrt(rate * (1.0 - rate) / reps)),
        master_seed=study.master_seed,
        config=config,
    )


def run_mc_study(study: McStudy, workers: int | None = None) -> McResult:
    """Rejection frequency of the configured test over seeded replications."""
    jobs = [(study, rep) for rep in range(study.replications)]
    rejections = _tally(_mc_worker, jobs, _workers(workers))
    return _result(study, rejections)


def _combiner_rep(args):
    study, rep, combiners = args
    return _with_rep_context(_combiner_rep_inner, study, rep, combiners)


def _combiner_rep_inner(study, rep, combiners):
    rng_data, rng_group, rng_match = _rep_streams(study.master_seed, rep)
    data = generate_cluster_dgp(study.dgp, rng_data)
    pairs, matchings, group = _between_setup(
        study, data, rng_group, rng_match, study.matching_draws
    )
    decisions = []
    for combiner in combiners:
        result = crk_test_between(
            pairs,
            matchings,
            null=study.null,
            alpha=study.alpha,
            direction=study.direction,
            group=group,
            combiner=combiner,
        )
        decisions.append(result.reject)
    return tuple(decisions)


def run_combiner_study(
    study: McStudy, combiners, workers: int | None = None
) -> dict[str, McResult]:
    """Between-cluster study evaluating several combiners on shared data.

    Per replication the matchings, sign group, and per-matching
    p-values are computed once, so the combiners are compared on
    identical randomization outcomes.
    """
    if study.mode != "between":
        raise ValueError("combiner studies use between mode")
    combiners = tuple(combiners)
    jobs = [(study, rep, combiners) for rep in range(study.replications)]
    nworkers = _workers(workers)
    if nworkers <= 1:
        rows = [_combiner_rep(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            rows = list(pool.map(_combiner_rep, jobs, chunksize=16))
    tallies = np.sum(np.asarray(rows, dtype=int), axis=0)
    return {
        combiner: _result(
            replace(study, combiner=combiner), int(tallies[i])
        )
        for i, combiner in enumerate(combiners)
    }


def run_cherrypick_study(
    study: McStudy, pick_count: int, workers: int | None = None
) -> McResult:
    """Size distortion of taking the best of several pre-test matchings.

    Per replication, pick_count random matchings are drawn and the
    smallest single-matching p-value is compared to alpha with no
    multiplicity correction; this is the practice the combined test is
    designed to rule out.
    """
    if pick_count < 1:
        raise ValueError("pick_count must be at least 1")
    if study.mode != "between":
        raise ValueError("cherry-picking studies use between mode")
    jobs = [(study, rep, pick_count) for rep in range(study.replications)]
    rejections = _tally(_cherry_worker, jobs, _workers(workers))
    return _result(study, rejections, extra={"pick_count": pick_count})
