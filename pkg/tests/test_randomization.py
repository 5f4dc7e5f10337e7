"""Sign-group machinery, randomization distributions, decisions, exactness."""

import numpy as np
import pytest

from crk.randomization import (
    EstimateProcess,
    GroupConfig,
    SignGroup,
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

GRID9 = np.arange(1, 10) / 10


def proc(rows, grid=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if grid is None:
        grid = np.linspace(0.1, 0.9, rows.shape[1])
    return EstimateProcess(values=rows, grid=grid)


# the q=2 singleton-grid fixture used throughout: rows (1,), (2,)
TWO = proc([[1.0], [2.0]], grid=[0.5])
G2 = enumerate_sign_group(2)


class TestSignGroups:
    def test_enumeration_count(self):
        assert enumerate_sign_group(3).members.shape == (8, 3)
        assert len(np.unique(enumerate_sign_group(3).members, axis=0)) == 8

    def test_q1(self):
        np.testing.assert_array_equal(
            enumerate_sign_group(1).members, [[1.0], [-1.0]]
        )

    def test_identity_first_and_unique(self):
        members = enumerate_sign_group(2).members
        np.testing.assert_array_equal(members[0], [1.0, 1.0])
        assert (members == 1.0).all(axis=1).sum() == 1

    @pytest.mark.parametrize("q", [0, 21])
    def test_guard(self, q):
        with pytest.raises(ValueError, match="sample_sign_group"):
            enumerate_sign_group(q)

    def test_sampling_deterministic(self):
        a = sample_sign_group(4, 1000, seed=7)
        b = sample_sign_group(4, 1000, seed=7)
        np.testing.assert_array_equal(a.members, b.members)

    def test_sampling_frequencies(self):
        g = sample_sign_group(2, 100_000, seed=5)
        codes = (g.members[:, 0] > 0) * 2 + (g.members[:, 1] > 0)
        freq = np.bincount(codes.astype(int), minlength=4) / g.size
        np.testing.assert_allclose(freq, 0.25, atol=0.01)

    def test_single_draw(self):
        g = sample_sign_group(1, 1, seed=3)
        assert g.members.shape == (1, 1) and g.members[0, 0] in (-1.0, 1.0)

    def test_group_config_auto(self):
        assert GroupConfig(exact_cap=4).resolve(3).is_exact
        assert not GroupConfig(draws=50, exact_cap=4).resolve(5).is_exact


class TestStatistic:
    def test_direct_arithmetic(self):
        X = proc([[1.0, 3.0], [2.0, -1.0]], grid=[0.25, 0.75])
        assert ks_statistic(X) == pytest.approx(1.5)

    def test_zero_process(self):
        assert ks_statistic(proc(np.zeros((3, 4)))) == 0.0

    def test_supremum_of_negatives(self):
        assert ks_statistic(proc([[-2.0, -1.0]])) == pytest.approx(-1.0)

    def test_shift(self):
        rng = np.random.default_rng(1)
        X = proc(rng.normal(size=(4, 5)))
        for c in (0.7, -2.2):
            assert ks_statistic(proc(X.values + c)) == pytest.approx(
                ks_statistic(X) + c
            )


class TestApplySigns:
    def test_identity(self):
        X = proc(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(apply_signs(X, [1, 1]).values, X.values)

    def test_global_flip(self):
        X = proc(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(apply_signs(X, [-1, -1]).values, -X.values)

    def test_involution(self):
        rng = np.random.default_rng(2)
        X = proc(rng.normal(size=(3, 4)))
        g = [-1, 1, -1]
        np.testing.assert_array_equal(
            apply_signs(apply_signs(X, g), g).values, X.values
        )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            apply_signs(proc(np.ones((2, 2))), [1, -1, 1])


class TestDistribution:
    def test_enumerated_example(self):
        np.testing.assert_allclose(
            randomization_distribution(TWO, G2), [-1.5, -0.5, 0.5, 1.5]
        )

    def test_zero_process(self):
        dist = randomization_distribution(proc(np.zeros((3, 2))), enumerate_sign_group(3))
        np.testing.assert_array_equal(dist, np.zeros(8))

    def test_length_always_group_size(self):
        g = sample_sign_group(3, 17, seed=0)
        X = proc(np.random.default_rng(0).normal(size=(3, 4)))
        assert randomization_distribution(X, g).shape == (17,)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            randomization_distribution(TWO, enumerate_sign_group(3))

    def test_group_closure_invariance(self):
        # multiplying by any fixed group element permutes the distribution
        rng = np.random.default_rng(9)
        X = proc(rng.normal(size=(3, 4)))
        G = enumerate_sign_group(3)
        base = randomization_distribution(X, G)
        for g in G.members:
            shifted = randomization_distribution(apply_signs(X, g), G)
            np.testing.assert_array_equal(shifted, base)


class TestCriticalValue:
    def test_order_statistic(self):
        assert critical_value([-1.5, -0.5, 0.5, 1.5], 0.25) == 0.5

    def test_ceiling(self):
        assert critical_value([-1.5, -0.5, 0.5, 1.5], 0.05) == 1.5

    def test_constant(self):
        assert critical_value([3.0, 3.0, 3.0], 0.4) == 3.0

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            critical_value([1.0], 0.0)


class TestPvalue:
    def test_enumerated_quarter(self):
        assert randomization_pvalue(TWO, G2) == 0.25

    def test_total_ties(self):
        X = proc(np.zeros((2, 3)))
        assert randomization_pvalue(X, enumerate_sign_group(2)) == 1.0

    def test_exact_mode_support(self):
        rng = np.random.default_rng(12)
        G = enumerate_sign_group(4)
        for _ in range(25):
            X = proc(rng.normal(size=(4, 3)))
            p = randomization_pvalue(X, G)
            assert p >= 1 / 16
            assert (p * 16) == pytest.approx(round(p * 16))

    def test_stochastic_approximation(self):
        rng = np.random.default_rng(13)
        X = proc(rng.normal(size=(6, 5)))
        exact = randomization_pvalue(X, enumerate_sign_group(6))
        sampled = randomization_pvalue(X, sample_sign_group(6, 100_000, seed=42))
        assert abs(sampled - exact) <= 0.01

    def test_add_identity_variant(self):
        rng = np.random.default_rng(14)
        X = proc(rng.normal(size=(3, 2)))
        g = sample_sign_group(3, 9, seed=1)
        raw = randomization_pvalue(X, g)
        padded = randomization_pvalue(X, g, add_identity=True)
        assert padded == pytest.approx((raw * 9 + 1) / 10)


class TestDecision:
    def test_enumerated_rejection(self):
        res = crk_decision(TWO, G2, alpha=0.25, direction="right")
        assert res.reject and res.p_value == 0.25

    def test_zero_process_never_rejects(self):
        X = proc(np.zeros((2, 3)))
        for direction in ("right", "left", "two_sided"):
            res = crk_decision(X, enumerate_sign_group(2), 0.3, direction)
            assert not res.reject and res.p_value == 1.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(15)
        X = proc(rng.normal(size=(4, 3)))
        G = enumerate_sign_group(4)
        base = crk_decision(X, G, 0.2)
        scaled = crk_decision(proc(3.0 * X.values), G, 0.2)
        assert scaled.reject == base.reject
        assert scaled.p_value == base.p_value
        assert scaled.statistic == pytest.approx(3 * base.statistic)
        assert scaled.critical_value == pytest.approx(3 * base.critical_value)

    def test_reject_iff_p_below_alpha(self):
        rng = np.random.default_rng(16)
        for _ in range(40):
            q = int(rng.integers(2, 6))
            X = proc(rng.normal(size=(q, 3)))
            G = (
                enumerate_sign_group(q)
                if rng.random() < 0.5
                else sample_sign_group(q, 40, seed=int(rng.integers(1000)))
            )
            alpha = float(rng.uniform(0.05, 0.5))
            for direction in ("right", "left"):
                res = crk_decision(X, G, alpha, direction)
                assert res.reject == (res.p_value <= alpha)

    def test_direction_duality(self):
        rng = np.random.default_rng(17)
        X = proc(rng.normal(size=(5, 4)))
        G = enumerate_sign_group(5)
        left = crk_decision(X, G, 0.1, "left")
        right_on_neg = crk_decision(X.negated(), G, 0.1, "right")
        assert left.p_value == right_on_neg.p_value
        assert left.reject == right_on_neg.reject

    def test_left_rules_agree_on_scalar_grid(self):
        # scalar grid and non-integer alpha*|G|: the negate rule and the
        # lower-quantile rule pick the same boundary element; at integer
        # alpha*|G| they can differ by one tie atom
        rng = np.random.default_rng(18)
        for _ in range(30):
            X = proc(rng.normal(size=(4, 1)), grid=[0.5])
            G = enumerate_sign_group(4)
            a = crk_decision(X, G, 0.3, "left", left_rule="negate")
            b = crk_decision(X, G, 0.3, "left", left_rule="lower_quantile")
            assert a.reject == b.reject

    def test_two_sided_union(self):
        rng = np.random.default_rng(19)
        for _ in range(25):
            X = proc(rng.normal(size=(4, 3)))
            G = enumerate_sign_group(4)
            alpha = 0.2
            r = crk_decision(X, G, alpha, "right")
            l = crk_decision(X, G, alpha, "left")
            both = crk_decision(X, G, alpha, "two_sided")
            assert both.reject == (r.reject or l.reject)
            assert both.p_value == pytest.approx(
                min(1.0, 2.0 * min(r.p_value, l.p_value))
            )


class TestSimulatedSize:
    def test_size_under_symmetry(self):
        # i.i.d. continuous symmetric rows: rejection rate <= alpha + 3 se
        rng = np.random.default_rng(20)
        G = enumerate_sign_group(4)
        alpha = 0.25
        reps = 2000
        rejections = 0
        for _ in range(reps):
            X = proc(rng.laplace(size=(4, 3)))
            rejections += crk_decision(X, G, alpha).reject
        rate = rejections / reps
        se = np.sqrt(alpha * (1 - alpha) / reps)
        assert rate <= alpha + 3 * se

    def test_similarity_at_integer_level(self):
        # (1-alpha)*2^q integer and continuous data: size equals alpha
        rng = np.random.default_rng(30)
        G = enumerate_sign_group(4)
        alpha = 0.25  # 0.75 * 16 = 12
        reps = 4000
        rejections = sum(
            crk_decision(proc(rng.normal(size=(4, 3))), G, alpha).reject
            for _ in range(reps)
        )
        rate = rejections / reps
        se = np.sqrt(alpha * (1 - alpha) / reps)
        assert abs(rate - alpha) <= 3 * se


class TestRandomizedTest:
    def test_weight_all_ties(self):
        X = proc(np.zeros((2, 2)))
        assert randomized_test_weight(X, G2, 0.25) == pytest.approx(0.25)

    def test_weight_enumerated_example(self):
        assert randomized_test_weight(TWO, G2, 0.25) == pytest.approx(0.0)

    def test_weight_requires_exact_group(self):
        with pytest.raises(ValueError):
            randomized_test_weight(TWO, sample_sign_group(2, 10, seed=0), 0.25)

    def test_exact_calibration(self):
        # P(phi >= V) = alpha exactly under symmetry
        rng = np.random.default_rng(40)
        G = enumerate_sign_group(3)
        alpha = 0.2
        reps = 4000
        rejections = sum(
            randomized_test(
                proc(rng.normal(size=(3, 2))), G, alpha, v=float(rng.uniform())
            )
            for _ in range(reps)
        )
        rate = rejections / reps
        se = np.sqrt(alpha * (1 - alpha) / reps)
        assert abs(rate - alpha) <= 3.5 * se


class TestTypes:
    def test_process_validation(self):
        with pytest.raises(ValueError):
            EstimateProcess(values=np.ones((2, 3)), grid=[0.1, 0.5])
        with pytest.raises(ValueError):
            EstimateProcess(values=np.array([[np.inf]]), grid=[0.5])
        with pytest.raises(ValueError):
            EstimateProcess(values=np.ones((1, 2)), grid=[0.5, 0.2])

    def test_sign_group_validation(self):
        with pytest.raises(ValueError):
            SignGroup(members=np.array([[1.0, 0.5]]), mode="sampled")
        with pytest.raises(ValueError):
            SignGroup(members=np.ones((3, 2)), mode="exact")
