import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blendmatch.distances import (
    MAHALANOBIS,
    PREDICTIVE,
    BlendSpec,
    DistanceVector,
    blend_ranked,
    blend_scaled,
    blend_scaled_rows,
    covariance_estimate,
    distance_table,
    mahalanobis_distance,
    mahalanobis_distances,
    pairwise_mahalanobis,
    predictive_distances,
    rank_rows,
    select_donors,
    write_distance_table,
)


def pd_vec(values):
    return DistanceVector(values=np.asarray(values, dtype=float), kind=PREDICTIVE)


def md_vec(values):
    return DistanceVector(values=np.asarray(values, dtype=float), kind=MAHALANOBIS)


class TestCovarianceEstimate:
    def test_single_predictor_sample_variance(self):
        est = covariance_estimate(np.array([[1.0], [2.0], [3.0]]))
        assert est.matrix.shape == (1, 1)
        assert est.matrix[0, 0] == pytest.approx(1.0)
        assert est.inverse[0, 0] == pytest.approx(1.0)

    def test_degenerate_column_is_regularized(self):
        # var of {0, 2} is 2, second column constant: raw covariance diag(2, 0)
        est = covariance_estimate(np.array([[0.0, 0.0], [2.0, 0.0]]))
        assert est.matrix[0, 0] == pytest.approx(2.0, rel=1e-5)
        assert est.matrix[1, 1] > 0.0
        assert np.all(np.isfinite(est.inverse))
        assert np.allclose(est.inverse @ est.matrix, np.eye(2), atol=1e-8)

    def test_all_constant_columns_fail(self):
        with pytest.raises(ValueError, match="singular"):
            covariance_estimate(np.ones((5, 2)))

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="at least 2 rows"):
            covariance_estimate(np.array([[1.0, 2.0]]))

    def test_large_standard_normal_sample_close_to_identity(self):
        x = np.random.default_rng(7).standard_normal((100_000, 3))
        est = covariance_estimate(x)
        assert np.allclose(est.matrix, np.eye(3), atol=0.02)

    def test_invariants(self, rng):
        x = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 4))
        est = covariance_estimate(x)
        assert np.allclose(est.matrix, est.matrix.T, atol=1e-10)
        assert np.all(np.diag(est.matrix) > 0.0)
        assert np.allclose(est.inverse @ est.matrix, np.eye(4), atol=1e-8)


class TestMahalanobis:
    def test_zero_for_identical_points(self, rng):
        x = rng.standard_normal((50, 3))
        est = covariance_estimate(x)
        assert mahalanobis_distance(x[0], x[0], est) == 0.0

    def test_identity_covariance_reduces_to_euclidean(self):
        est = covariance_estimate(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * math.sqrt(1.5))
        # sample covariance of these 4 points is the identity
        assert np.allclose(est.matrix, np.eye(2), atol=1e-12)
        assert mahalanobis_distance([3.0, 4.0], [0.0, 0.0], est) == pytest.approx(5.0, abs=1e-10)

    def test_diagonal_covariance_hand_value(self):
        from blendmatch.distances import CovarianceEstimate

        est = CovarianceEstimate(
            matrix=np.diag([4.0, 1.0]), inverse=np.diag([0.25, 1.0]), dimension=2
        )
        # sqrt(4/4 + 1/1) = sqrt(2)
        got = mahalanobis_distance([2.0, 1.0], [0.0, 0.0], est)
        assert got == pytest.approx(1.414214, abs=1e-6)

    def test_dimension_mismatch(self, rng):
        est = covariance_estimate(rng.standard_normal((10, 3)))
        with pytest.raises(ValueError, match="dimension"):
            mahalanobis_distance([1.0, 2.0], [0.0, 0.0], est)

    @given(st.integers(0, 2**32 - 1))
    def test_identity_covariance_equals_euclidean_property(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 5))
        x = rng.standard_normal(p) * 3
        y = rng.standard_normal(p) * 3
        from blendmatch.distances import CovarianceEstimate

        est = CovarianceEstimate(matrix=np.eye(p), inverse=np.eye(p), dimension=p)
        assert mahalanobis_distance(x, y, est) == pytest.approx(
            float(np.linalg.norm(x - y)), abs=1e-10
        )

    @given(
        st.integers(0, 2**32 - 1),
        st.floats(0.5, 3.0),
        st.floats(0.5, 3.0),
    )
    @settings(max_examples=40)
    def test_invariant_under_rescaling_of_data_and_points(self, seed, a, b):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((80, 2)) @ np.array([[1.0, 0.3], [0.0, 1.0]])
        x, y = data[0], data[1]
        scale = np.diag([a, b])
        d_raw = mahalanobis_distance(x, y, covariance_estimate(data))
        d_scaled = mahalanobis_distance(
            x @ scale, y @ scale, covariance_estimate(data @ scale)
        )
        assert d_scaled == pytest.approx(d_raw, abs=1e-8)

    def test_pairwise_matches_scalar(self, rng):
        x = rng.standard_normal((30, 3))
        est = covariance_estimate(x)
        mat = pairwise_mahalanobis(x[:5], x[5:15], est)
        for i in range(5):
            for j in range(10):
                assert mat[i, j] == pytest.approx(
                    mahalanobis_distance(x[i], x[5 + j], est), abs=1e-10
                )


class TestBlendRanked:
    def test_full_weight_on_pd_keeps_pd_order(self, rng):
        pd = pd_vec([0.5, 0.1, 0.9, 0.3])
        md = md_vec([4.0, 3.0, 2.0, 1.0])
        out = blend_ranked(pd, md, 1.0, rng)
        assert np.array_equal(np.argsort(out.values), np.argsort(pd.values))

    def test_zero_weight_keeps_md_order(self, rng):
        pd = pd_vec([0.5, 0.1, 0.9, 0.3])
        md = md_vec([4.0, 3.0, 2.0, 1.0])
        out = blend_ranked(pd, md, 0.0, rng)
        assert np.array_equal(np.argsort(out.values), np.argsort(md.values))

    def test_hand_worked_half_blend(self, rng):
        # rank(pd) = [1, 2, 3], rank(md) = [3, 1, 2]
        pd = pd_vec([0.1, 0.2, 0.3])
        md = md_vec([0.3, 0.1, 0.2])
        out = blend_ranked(pd, md, 0.5, rng)
        assert out.values.tolist() == [2.0, 1.5, 2.5]
        assert int(np.argmin(out.values)) == 1

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError, match="length"):
            blend_ranked(pd_vec([1.0, 2.0]), md_vec([1.0]), 0.5, rng)

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    @settings(max_examples=40)
    def test_values_are_convex_combinations_of_ranks(self, seed, blend):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        pd = rng.random(n)
        md = rng.random(n)
        check = np.random.default_rng(seed)
        expected = blend * rank_rows(pd[None, :], check)[0] + (1.0 - blend) * rank_rows(
            md[None, :], check
        )[0]
        out = blend_ranked(pd_vec(pd), md_vec(md), blend, np.random.default_rng(seed))
        assert np.allclose(out.values, expected)
        assert np.all(out.values >= 1.0 - 1e-12)
        assert np.all(out.values <= n + 1e-12)

    def test_tied_ranks_are_a_random_permutation(self):
        ranks = rank_rows(np.zeros((1, 6)), np.random.default_rng(3))[0]
        assert sorted(ranks.tolist()) == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]


class TestBlendScaled:
    def test_hand_worked_half_blend(self):
        # sd of {1,2,3} is 1, so the scaled vectors are [-1,0,1] and [1,0,-1]
        out = blend_scaled(pd_vec([1.0, 2.0, 3.0]), md_vec([3.0, 2.0, 1.0]), 0.5)
        assert out.values.tolist() == [0.0, 0.0, 0.0]

    def test_full_weight_keeps_pd_argmin(self, rng):
        pd = np.array([0.7, 0.2, 0.5, 0.9])
        out = blend_scaled(pd_vec(pd), md_vec([1.0, 2.0, 3.0, 4.0]), 1.0)
        assert int(np.argmin(out.values)) == int(np.argmin(pd))

    def test_zero_weight_ignores_degenerate_pd(self):
        out = blend_scaled(pd_vec([5.0, 5.0, 5.0]), md_vec([1.0, 2.0, 3.0]), 0.0)
        assert out.values.tolist() == [-1.0, 0.0, 1.0]

    def test_degenerate_side_with_weight_warns(self):
        with pytest.warns(RuntimeWarning, match="constant"):
            out = blend_scaled(pd_vec([5.0, 5.0, 5.0]), md_vec([1.0, 2.0, 3.0]), 0.5)
        # constant side contributes its centered (all-zero) values
        assert np.allclose(out.values, 0.5 * np.array([-1.0, 0.0, 1.0]))

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    @settings(max_examples=40)
    def test_mean_zero(self, seed, blend):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        pd = rng.random(n) * 10
        md = rng.random(n) * 3
        out = blend_scaled_rows(pd[None, :], md[None, :], blend)
        assert abs(out[0].mean()) < 1e-10


class TestSelectDonors:
    def test_smallest_two(self, rng):
        assert select_donors([0.3, 0.1, 0.2], 2, rng).tolist() == [1, 2]

    def test_all_when_k_equals_n(self, rng):
        got = select_donors([3.0, 1.0, 2.0], 3, rng)
        assert sorted(got.tolist()) == [0, 1, 2]
        assert got.tolist() == [1, 2, 0]  # sorted by distance

    def test_k_too_large(self, rng):
        with pytest.raises(ValueError, match="k="):
            select_donors([1.0, 2.0], 3, rng)

    def test_ties_reproducible_for_fixed_seed(self):
        first = select_donors(np.ones(6), 2, np.random.default_rng(11))
        second = select_donors(np.ones(6), 2, np.random.default_rng(11))
        assert np.array_equal(first, second)

    def test_tie_break_is_uniform(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(4)
        for _ in range(4000):
            counts[select_donors(np.zeros(4), 1, rng)[0]] += 1
        assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40)
    def test_invariant_under_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        k = int(rng.integers(1, n + 1))
        values = rng.random(n) * 5
        a = select_donors(values, k, np.random.default_rng(seed + 1))
        b = select_donors(np.exp(values) + 7.0, k, np.random.default_rng(seed + 1))
        assert np.array_equal(a, b)


class TestSelectionEquivalenceAtFullWeight:
    def test_ranked_and_scaled_match_pd_selection(self):
        rng = np.random.default_rng(99)
        for trial in range(200):
            n = int(rng.integers(6, 60))
            k = int(rng.integers(1, 6))
            pd = pd_vec(rng.random(n) * 10)
            md = md_vec(rng.random(n) * 4)
            base = select_donors(pd, k, np.random.default_rng(trial))
            ranked = blend_ranked(pd, md, 1.0, np.random.default_rng(trial + 1))
            scaled = blend_scaled(pd, md, 1.0)
            got_r = select_donors(ranked, k, np.random.default_rng(trial + 2))
            got_s = select_donors(scaled, k, np.random.default_rng(trial + 3))
            assert set(got_r.tolist()) == set(base.tolist())
            assert set(got_s.tolist()) == set(base.tolist())


class TestDistanceTable:
    def test_identical_donor_gives_zero_row(self, rng):
        x = rng.standard_normal((20, 3))
        est = covariance_estimate(x)
        preds = rng.standard_normal(20)
        table = distance_table(x, preds, x[4], preds[4], est)
        assert table[4, 1] == 0.0
        assert table[4, 2] == 0.0

    def test_single_donor_pd(self, rng):
        est = covariance_estimate(rng.standard_normal((10, 2)))
        table = distance_table(np.array([[1.0, 1.0]]), [3.0], [0.0, 0.0], 1.0, est)
        assert table.shape == (1, 3)
        assert table[0, 1] == pytest.approx(2.0)

    def test_synthetic_199_donor_table_is_finite(self):
        from blendmatch.datagen import GenConfig, gen_outcome, gen_predictors
        from blendmatch.regression import ols_fit, predict

        rng = np.random.default_rng(5)
        x = gen_predictors(GenConfig(n=200, rho=0.7), rng)
        y = gen_outcome(x, 7.0, rng)
        fit = ols_fit(x[1:], y[1:])
        donor_preds = predict(fit.coefs, x[1:])
        target_pred = float(predict(fit.coefs, x[:1])[0])
        table = distance_table(x[1:], donor_preds, x[0], target_pred, covariance_estimate(x))
        assert table.shape == (199, 3)
        assert np.all(np.isfinite(table))
        assert np.all(table[:, 1:] >= 0.0)

    def test_csv_round_trip_exact(self, rng, tmp_path):
        x = rng.standard_normal((8, 3))
        est = covariance_estimate(x)
        preds = rng.standard_normal(8)
        table = distance_table(x, preds, x[0], preds[0], est)
        path = tmp_path / "table.csv"
        write_distance_table(table, path)
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header == ["index", "pd", "md"]
        for row, expected in zip(rows, table):
            assert int(row[0]) == int(expected[0])
            assert float(row[1]) == expected[1]
            assert float(row[2]) == expected[2]


class TestBlendSpec:
    def test_rejects_bad_blend(self):
        with pytest.raises(ValueError, match="blend"):
            BlendSpec("ranked", 1.5, 5)

    def test_rejects_bad_family(self):
        with pytest.raises(ValueError, match="family"):
            BlendSpec("nearest", 0.5, 5)

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError, match="k"):
            BlendSpec("ranked", 0.5, 0)

    def test_labels(self):
        assert BlendSpec("pmm", 1.0, 5).label == "pmm"
        assert BlendSpec("ranked", 0.5, 5).label == "ranked_0.5"
        assert BlendSpec("scaled", 1.0, 5).label == "scaled_1"


class TestDistanceVector:
    def test_rejects_negative_predictive(self):
        with pytest.raises(ValueError, match="non-negative"):
            DistanceVector(values=np.array([-1.0]), kind=PREDICTIVE)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            DistanceVector(values=np.array([1.0]), kind="cosine")

    def test_factories(self, rng):
        x = rng.standard_normal((12, 3))
        est = covariance_estimate(x)
        pd = predictive_distances([1.0, 3.0], 2.0)
        assert pd.values.tolist() == [1.0, 1.0]
        md = mahalanobis_distances(x[0], x[1:], est)
        assert md.kind == MAHALANOBIS
        assert len(md) == 11
