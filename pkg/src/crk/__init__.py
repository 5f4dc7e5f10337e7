"""Cluster-randomized Kolmogorov-Smirnov (CRK) tests.

Randomization inference on quantile and regression-quantile processes
with a finite number of large, heterogeneous clusters: the within-cluster
test, the between-cluster test with combined p-values, a quantile
difference-in-differences estimator, and a Monte Carlo harness.
"""

from ._backend import backend
from .between import (
    BetweenTestResult,
    Matching,
    MatchingSet,
    PairwiseEstimates,
    assemble_matched_process,
    combine_pvalues,
    crk_test_between,
    enumerate_matchings,
    matching_count,
    pairwise_treatment_qr,
    sample_matchings,
)
from .qdid import (
    PanelSample,
    counterfactual_cdf,
    counterfactual_values,
    pairwise_qdid_estimates,
    qtt_estimate,
)
from .quantile import (
    empirical_cdf,
    empirical_quantile,
    empirical_quantiles,
    fit_qr,
    fit_qr_process,
    pinball_loss,
    qr_oracle_bruteforce,
)
from .randomization import (
    EstimateProcess,
    GroupConfig,
    SignGroup,
    TestResult,
    apply_signs,
    crk_decision,
    critical_value,
    enumerate_sign_group,
    ks_statistic,
    randomization_distribution,
    randomization_pvalue,
    randomized_test,
    randomized_test_weight,
    sample_sign_group,
)
from .simulate import (
    DgpConfig,
    McResult,
    McStudy,
    generate_cluster_dgp,
    run_cherrypick_study,
    run_combiner_study,
    run_mc_study,
)
from .within import (
    Cluster,
    ClusterDataset,
    EstimatorSpec,
    MergeAfterAnalysisError,
    Session,
    crk_test_within,
    estimate_per_cluster,
    merge_clusters,
)

__version__ = "0.1.0"

__all__ = [
    "BetweenTestResult",
    "Cluster",
    "ClusterDataset",
    "DgpConfig",
    "EstimateProcess",
    "EstimatorSpec",
    "GroupConfig",
    "Matching",
    "MatchingSet",
    "McResult",
    "McStudy",
    "MergeAfterAnalysisError",
    "PairwiseEstimates",
    "PanelSample",
    "Session",
    "SignGroup",
    "TestResult",
    "apply_signs",
    "assemble_matched_process",
    "backend",
    "combine_pvalues",
    "counterfactual_cdf",
    "counterfactual_values",
    "crk_decision",
    "crk_test_between",
    "crk_test_within",
    "critical_value",
    "empirical_cdf",
    "empirical_quantile",
    "empirical_quantiles",
    "enumerate_matchings",
    "enumerate_sign_group",
    "estimate_per_cluster",
    "fit_qr",
    "fit_qr_process",
    "generate_cluster_dgp",
    "ks_statistic",
    "matching_count",
    "merge_clusters",
    "pairwise_qdid_estimates",
    "pairwise_treatment_qr",
    "pinball_loss",
    "qr_oracle_bruteforce",
    "qtt_estimate",
    "randomization_distribution",
    "randomization_pvalue",
    "randomized_test",
    "randomized_test_weight",
    "run_cherrypick_study",
    "run_combiner_study",
    "run_mc_study",
    "sample_matchings",
    "sample_sign_group",
    "__version__",
]
