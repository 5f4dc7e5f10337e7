"""Per-cluster estimation, merging, session ordering, the within test."""

import numpy as np
import pytest

from crk.randomization import GroupConfig, enumerate_sign_group
from crk.within import (
    Cluster,
    ClusterDataset,
    EstimatorSpec,
    MergeAfterAnalysisError,
    Session,
    crk_test_within,
    estimate_per_cluster,
    merge_clusters,
    resolve_null,
)

GRID = np.arange(1, 10) / 10


def quantile_dataset(samples):
    return ClusterDataset(
        clusters=tuple(
            Cluster(cluster_id=f"c{i}", y=np.asarray(y, float))
            for i, y in enumerate(samples)
        )
    )


class TestEstimatePerCluster:
    def test_unconditional_median(self):
        data = quantile_dataset([[1, 2, 3], [5, 6, 7]])
        process = estimate_per_cluster(
            data, EstimatorSpec(kind="unconditional_quantile"), [0.5]
        )
        np.testing.assert_allclose(process.values, [[2.0], [6.0]])

    def test_qr_zero_noise_slope(self):
        rng = np.random.default_rng(0)
        clusters = []
        for i in range(2):
            x = rng.normal(size=12)
            clusters.append(
                Cluster(cluster_id=f"c{i}", y=2.0 * x, covariates=x[:, None])
            )
        data = ClusterDataset(clusters=tuple(clusters))
        process = estimate_per_cluster(
            data, EstimatorSpec(kind="qr_coefficient", target_column=1), GRID
        )
        np.testing.assert_allclose(process.values, 2.0, atol=1e-9)

    def test_qte_pair_location_shift(self):
        rng = np.random.default_rng(1)
        clusters = []
        for i in range(2):
            y0 = rng.normal(size=9)
            y = np.concatenate([y0 + 1.0, y0])
            treated = np.repeat([True, False], 9)
            clusters.append(Cluster(cluster_id=f"c{i}", y=y, treated=treated))
        data = ClusterDataset(clusters=tuple(clusters))
        process = estimate_per_cluster(
            data, EstimatorSpec(kind="qte_within_pair"), GRID
        )
        np.testing.assert_allclose(process.values, 1.0, atol=1e-12)

    def test_error_names_cluster(self):
        data = ClusterDataset(
            clusters=(
                Cluster(
                    cluster_id="ok",
                    y=np.arange(5.0),
                    covariates=np.arange(5.0)[:, None],
                ),
                Cluster(cluster_id="tiny", y=np.array([1.0]), covariates=np.ones((1, 1))),
            )
        )
        spec = EstimatorSpec(kind="qr_coefficient", target_column=1)
        with pytest.raises(ValueError, match="tiny"):
            estimate_per_cluster(data, spec, GRID)

    def test_collinear_cluster_named(self):
        data = ClusterDataset(
            clusters=(
                Cluster(cluster_id="good", y=np.arange(6.0), covariates=np.arange(6.0)[:, None]),
                Cluster(cluster_id="flat", y=np.arange(6.0), covariates=np.ones((6, 1))),
            )
        )
        spec = EstimatorSpec(kind="qr_coefficient", target_column=1)
        with pytest.raises(np.linalg.LinAlgError, match="flat"):
            estimate_per_cluster(data, spec, GRID)

    def test_missing_covariates_named(self):
        data = quantile_dataset([[1, 2], [3, 4]])
        with pytest.raises(ValueError, match="c0"):
            estimate_per_cluster(
                data, EstimatorSpec(kind="qr_coefficient", target_column=0), [0.5]
            )

    def test_per_cluster_locality(self):
        rng = np.random.default_rng(2)
        samples = [rng.normal(size=20) for _ in range(4)]
        spec = EstimatorSpec(kind="unconditional_quantile")
        base = estimate_per_cluster(quantile_dataset(samples), spec, GRID)
        changed = list(samples)
        changed[2] = rng.normal(size=25)
        new = estimate_per_cluster(quantile_dataset(changed), spec, GRID)
        np.testing.assert_array_equal(new.values[[0, 1, 3]], base.values[[0, 1, 3]])
        assert not np.array_equal(new.values[2], base.values[2])


class TestMergeClusters:
    def test_concatenation(self):
        data = quantile_dataset([[1, 2, 3], [4, 5, 6], [7, 8]])
        merged = merge_clusters(data, [["c0", "c1"]])
        assert merged.cluster_ids == ("c0+c1", "c2")
        np.testing.assert_array_equal(merged.clusters[0].y, [1, 2, 3, 4, 5, 6])

    def test_empty_plan_is_identity(self):
        data = quantile_dataset([[1, 2], [3, 4]])
        assert merge_clusters(data, []) is not data
        assert merge_clusters(data, []).cluster_ids == data.cluster_ids

    def test_pairwise_merge_halves_count(self):
        rng = np.random.default_rng(3)
        clusters = [
            Cluster(
                cluster_id=f"c{i}",
                y=rng.normal(size=4),
                treated=np.full(4, i % 2 == 0),
            )
            for i in range(6)
        ]
        data = ClusterDataset(clusters=tuple(clusters))
        plan = [["c0", "c1"], ["c2", "c3"], ["c4", "c5"]]
        merged = merge_clusters(data, plan)
        assert merged.q == 3
        for cluster in merged.clusters:
            assert cluster.treated.sum() == 4  # each merged pair is half treated
        estimate_per_cluster(merged, EstimatorSpec(kind="qte_within_pair"), [0.5])

    def test_overlap_rejected(self):
        data = quantile_dataset([[1, 2], [3, 4], [5, 6]])
        with pytest.raises(ValueError, match="two merge groups"):
            merge_clusters(data, [["c0", "c1"], ["c1", "c2"]])

    def test_unknown_id_rejected(self):
        data = quantile_dataset([[1, 2], [3, 4]])
        with pytest.raises(ValueError, match="unknown"):
            merge_clusters(data, [["c0", "nope"]])

    def test_lexicographic_join(self):
        data = quantile_dataset([[1, 2], [3, 4], [5, 6]])
        merged = merge_clusters(data, [["c1", "c0"]])
        assert merged.cluster_ids == ("c0+c1", "c2")
        np.testing.assert_array_equal(merged.clusters[0].y, [1, 2, 3, 4])


class TestSession:
    def test_merge_then_test(self):
        data = quantile_dataset([[1, 2, 3], [4, 5, 6], [7, 8, 9], [1, 5, 9]])
        session = Session(data)
        session.merge([["c0", "c1"]])
        result = session.test_within(
            EstimatorSpec(kind="unconditional_quantile"),
            [0.5],
            group=GroupConfig(mode="exact"),
        )
        assert result.group_size == 8

    def test_merge_after_estimate_refused(self):
        data = quantile_dataset([[1, 2, 3], [4, 5, 6]])
        session = Session(data)
        session.estimate(EstimatorSpec(kind="unconditional_quantile"), [0.5])
        with pytest.raises(MergeAfterAnalysisError):
            session.merge([["c0", "c1"]])


class TestCrkTestWithin:
    def test_exact_null_gives_p_one(self):
        data = quantile_dataset([[1.0, 2.0, 3.0]] * 3)
        result = crk_test_within(
            data,
            EstimatorSpec(kind="unconditional_quantile"),
            [0.5],
            null=2.0,
            group=GroupConfig(mode="exact"),
        )
        assert result.p_value == 1.0 and not result.reject

    def test_null_recentring(self):
        rng = np.random.default_rng(4)
        samples = [rng.normal(size=15) for _ in range(4)]
        data = quantile_dataset(samples)
        shifted = quantile_dataset([s - 0.7 for s in samples])
        spec = EstimatorSpec(kind="unconditional_quantile")
        group = enumerate_sign_group(4)
        res_null = crk_test_within(data, spec, GRID, null=0.7, group=group)
        res_zero = crk_test_within(shifted, spec, GRID, null=0.0, group=group)
        assert res_null.p_value == res_zero.p_value
        assert res_null.reject == res_zero.reject

    def test_direction_duality(self):
        # left-direction test equals the right-direction test on the
        # sign-flipped estimate process
        from crk.randomization import crk_decision

        rng = np.random.default_rng(5)
        data = quantile_dataset([rng.normal(size=12) for _ in range(4)])
        spec = EstimatorSpec(kind="unconditional_quantile")
        grid = [0.3, 0.5, 0.7]
        group = enumerate_sign_group(4)
        left = crk_test_within(data, spec, grid, direction="left", group=group)
        process = estimate_per_cluster(data, spec, grid)
        right = crk_decision(process.negated(), group, 0.05, "right")
        assert left.p_value == right.p_value
        assert left.reject == right.reject

    def test_group_config_seed_reproducible(self):
        rng = np.random.default_rng(6)
        data = quantile_dataset([rng.normal(size=10) for _ in range(16)])
        spec = EstimatorSpec(kind="unconditional_quantile")
        cfg = GroupConfig(mode="sampled", draws=500, seed=11)
        a = crk_test_within(data, spec, GRID, group=cfg)
        b = crk_test_within(data, spec, GRID, group=cfg)
        assert a == b

    def test_power_grows_with_sample_size(self):
        # fixed positive shift against a zero null: rejection rate must
        # climb toward 1 as per-cluster n grows
        spec = EstimatorSpec(kind="unconditional_quantile")
        group = enumerate_sign_group(6)
        rates = []
        for n in (50, 200, 800):
            rng = np.random.default_rng(1000 + n)
            rejections = 0
            reps = 200
            for _ in range(reps):
                data = quantile_dataset(
                    [rng.normal(loc=1.0, scale=4.0, size=n) for _ in range(6)]
                )
                res = crk_test_within(
                    data, spec, (0.25, 0.5, 0.75), null=0.0, alpha=0.05, group=group
                )
                rejections += res.reject
            rates.append(rejections / reps)
        se = np.sqrt(0.25 / 200)
        assert rates[0] <= rates[1] + 3 * se
        assert rates[1] <= rates[2] + 3 * se
        assert rates[2] >= 0.9


class TestNullFunction:
    def test_scalar_broadcast(self):
        np.testing.assert_array_equal(resolve_null(1.5, [0.2, 0.8]), [1.5, 1.5])

    def test_length_checked(self):
        with pytest.raises(ValueError):
            resolve_null([1.0, 2.0, 3.0], [0.2, 0.8])

    def test_finite_checked(self):
        with pytest.raises(ValueError):
            resolve_null(np.inf, [0.5])
