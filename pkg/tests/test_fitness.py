import math

import numpy as np
import pytest

from deepselect import (
    FeatureMatrix,
    ProbabilityMatrix,
    evaluate_fitness,
    gd_contribution,
    gini_score,
    log_geometric_diversity,
    normalize_features,
    subset_gini,
)
from deepselect.errors import EmptySubsetError, MembershipError
from deepselect.fitness import NEG_INF, gd_contributions_all, log_gd_batch

from conftest import normalized, oracle_log_gd, oracle_subset_gini, random_probabilities


class TestGiniScore:
    def test_one_hot_is_certain(self):
        assert gini_score([1.0, 0.0, 0.0]) == 0.0

    def test_even_binary(self):
        assert gini_score([0.5, 0.5]) == 0.5

    def test_uniform_ten_classes(self):
        assert gini_score([0.1] * 10) == pytest.approx(0.9, abs=1e-15)

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            gini_score([0.6, 0.6])

    def test_permutation_invariant(self, rng):
        row = rng.dirichlet(np.ones(6))
        assert gini_score(row) == pytest.approx(gini_score(row[::-1]), abs=1e-15)


class TestSubsetGini:
    def test_singleton(self):
        mat = ProbabilityMatrix(np.array([[0.5, 0.5]]))
        assert subset_gini(mat, [0]) == 0.5

    def test_mean_of_two(self):
        mat = ProbabilityMatrix(np.array([[1.0, 0.0], [0.5, 0.5]]))
        assert subset_gini(mat, [0, 1]) == 0.25

    def test_three_rows(self):
        mat = ProbabilityMatrix(np.array([[1, 0], [0.5, 0.5], [0.9, 0.1]], dtype=float))
        # (0 + 0.5 + 0.18) / 3, evaluated independently
        assert subset_gini(mat, [0, 1, 2]) == pytest.approx(0.68 / 3, abs=1e-12)

    def test_empty_subset(self):
        mat = ProbabilityMatrix(np.array([[0.5, 0.5]]))
        with pytest.raises(EmptySubsetError):
            subset_gini(mat, [])

    def test_matches_direct_evaluation(self, rng):
        mat = random_probabilities(rng, 30, 7)
        for _ in range(50):
            ids = rng.choice(30, size=int(rng.integers(1, 10)), replace=False)
            assert subset_gini(mat, ids) == pytest.approx(
                oracle_subset_gini(mat.values, ids), abs=1e-12
            )


class TestNormalizeFeatures:
    def test_linear_column(self):
        out = normalize_features(FeatureMatrix(np.array([[2.0], [4.0], [6.0]])))
        assert out.values[:, 0].tolist() == [0.0, 0.5, 1.0]

    def test_constant_column_zeroed(self):
        out = normalize_features(FeatureMatrix(np.array([[5.0], [5.0], [5.0]])))
        assert out.values[:, 0].tolist() == [0.0, 0.0, 0.0]

    def test_negative_range(self):
        out = normalize_features(FeatureMatrix(np.array([[-1.0], [1.0]])))
        assert out.values[:, 0].tolist() == [0.0, 1.0]

    def test_nonconstant_columns_attain_bounds(self, rng):
        out = normalize_features(FeatureMatrix(rng.normal(size=(40, 6))))
        assert np.allclose(out.values.min(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.values.max(axis=0), 1.0, atol=1e-12)


class TestLogGeometricDiversity:
    def test_orthonormal_rows(self):
        feats = normalized([[1.0, 0.0], [0.0, 1.0]])
        assert log_geometric_diversity(feats, [0, 1]) == 0.0

    def test_duplicate_rows_singular(self):
        feats = normalized([[0.5, 0.5], [0.5, 0.5]])
        assert log_geometric_diversity(feats, [0, 1]) == NEG_INF

    def test_hand_gram(self):
        # rows [1,0] and [1,1]: Gram [[1,1],[1,2]], det 1
        feats = normalized([[1.0, 0.0], [1.0, 1.0]])
        assert log_geometric_diversity(feats, [0, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_singleton(self):
        feats = normalized([[1.0, 0.0]])
        assert log_geometric_diversity(feats, [0]) == pytest.approx(0.0, abs=1e-12)

    def test_subset_order_invariant(self, rng):
        feats = normalized(rng.random((12, 5)))
        ids = [3, 7, 1, 9]
        base = log_geometric_diversity(feats, ids)
        assert log_geometric_diversity(feats, ids[::-1]) == pytest.approx(base, rel=1e-12)

    def test_column_permutation_invariant(self, rng):
        raw = rng.random((12, 5))
        ids = [0, 4, 6]
        base = log_geometric_diversity(normalized(raw), ids)
        shuffled = normalized(raw[:, rng.permutation(5)])
        assert log_geometric_diversity(shuffled, ids) == pytest.approx(base, rel=1e-10)

    def test_orthogonal_append_never_decreases(self, rng):
        # appending a row orthogonal to the span, with norm >= 1, cannot shrink
        for _ in range(20):
            d = int(rng.integers(3, 7))
            k = int(rng.integers(1, d))
            basis = np.linalg.qr(rng.normal(size=(d, d)))[0].T
            rows = rng.random((k, k)) @ basis[:k]
            extra = basis[k] * float(rng.uniform(1.0, 3.0))
            feats = FeatureMatrix(np.vstack([rows, extra]))
            before = log_geometric_diversity(feats, list(range(k)))
            after = log_geometric_diversity(feats, list(range(k + 1)))
            if math.isfinite(before):
                assert after >= before - 1e-9

    def test_matches_cofactor_oracle(self, rng):
        for _ in range(300):
            d = int(rng.integers(1, 7))
            k = int(rng.integers(1, 7))
            n = max(k + 2, 8)
            feats = normalize_features(FeatureMatrix(rng.random((n, d))))
            ids = rng.choice(n, size=k, replace=False)
            got = log_geometric_diversity(feats, ids)
            want = oracle_log_gd(feats.values, ids)
            if math.isinf(want):
                assert got == NEG_INF
            else:
                assert got == pytest.approx(want, rel=1e-8, abs=1e-8)

    def test_batch_matches_scalar(self, rng):
        for k, d in ((4, 9), (9, 4)):
            feats = normalize_features(FeatureMatrix(rng.random((30, d))))
            genes = np.stack(
                [rng.choice(30, size=k, replace=False) for _ in range(25)]
            )
            batch = log_gd_batch(feats.values, genes)
            for row, got in zip(genes, batch):
                assert got == log_geometric_diversity(feats, row)

    def test_bad_id(self):
        feats = normalized([[1.0, 0.0]])
        with pytest.raises(IndexError):
            log_geometric_diversity(feats, [3])


class TestGdContribution:
    def test_orthonormal_pair(self):
        feats = normalized([[1.0, 0.0], [0.0, 1.0]])
        assert gd_contribution(feats, [0, 1], 1) == 0.0

    def test_duplicate_orders_below_everything(self):
        feats = normalized(
            [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        )
        contribution = gd_contribution(feats, [0, 1, 2], 0)
        assert contribution == NEG_INF

    def test_three_rows_in_two_dims(self):
        # more rows than feature dimensions: the d x d feature Gram applies;
        # [[2,1],[1,2]] has det 3, the remainder {e1, e2} has det 1
        feats = normalized([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        got = gd_contribution(feats, [0, 1, 2], 1)
        assert got == pytest.approx(math.log(3.0), rel=1e-12)

    def test_membership_enforced(self):
        feats = normalized([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(MembershipError):
            gd_contribution(feats, [0, 1], 5)

    def test_consistent_with_two_evaluations(self, rng):
        feats = normalize_features(FeatureMatrix(rng.random((20, 5))))
        for _ in range(40):
            k = int(rng.integers(2, 8))
            ids = rng.choice(20, size=k, replace=False)
            member = int(ids[rng.integers(0, k)])
            full = log_geometric_diversity(feats, ids)
            rest = log_geometric_diversity(feats, [i for i in ids if i != member])
            expected = full - rest
            if math.isnan(expected):
                expected = 0.0
            assert gd_contribution(feats, ids, member) == expected

    def test_fast_path_agrees_with_direct(self, rng):
        for k, d in ((5, 8), (8, 3)):
            feats = normalize_features(FeatureMatrix(rng.random((20, d))))
            ids = rng.choice(20, size=k, replace=False)
            fast = gd_contributions_all(feats.values, ids)
            for j, member in enumerate(ids):
                direct = gd_contribution(feats, ids, int(member))
                assert fast[j] == pytest.approx(direct, rel=1e-8, abs=1e-8)


class TestEvaluateFitness:
    def test_singleton_composition(self):
        probs = ProbabilityMatrix(np.array([[0.5, 0.5]]))
        feats = normalized([[1.0, 0.0]])
        pair = evaluate_fitness(probs, feats, [0])
        assert pair.gini == 0.5
        assert pair.log_gd == pytest.approx(0.0, abs=1e-12)

    def test_duplicate_features_sentinel(self):
        probs = ProbabilityMatrix(np.array([[0.5, 0.5], [0.9, 0.1]]))
        feats = normalized([[0.3, 0.7], [0.3, 0.7]])
        pair = evaluate_fitness(probs, feats, [0, 1])
        assert pair.gini == pytest.approx(0.34, abs=1e-12)
        assert pair.log_gd == NEG_INF

    def test_orthonormal_one_hot(self):
        probs = ProbabilityMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        feats = normalized([[1.0, 0.0], [0.0, 1.0]])
        pair = evaluate_fitness(probs, feats, [0, 1])
        assert pair == (0.0, 0.0)
