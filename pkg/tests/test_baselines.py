from itertools import combinations

import numpy as np
import pytest

from deepselect import ProbabilityMatrix, gini_top_k, maxp_top_k, random_select
from deepselect.baselines import with_fitness
from deepselect.errors import BudgetError
from deepselect.fitness import normalize_features
from deepselect import FeatureMatrix

from conftest import random_probabilities


class TestRandomSelect:
    def test_full_budget(self):
        assert sorted(random_select(5, 5, seed=1).subset) == [0, 1, 2, 3, 4]

    def test_seed_reproducible(self):
        assert random_select(50, 10, seed=7).subset == random_select(50, 10, seed=7).subset

    def test_budget_error(self):
        with pytest.raises(BudgetError):
            random_select(4, 5, seed=0)

    def test_uniform_over_subsets(self):
        # n=4, budget=2: each of the 6 subsets should appear ~1/6 of the time
        counts = {frozenset(c): 0 for c in combinations(range(4), 2)}
        draws = 10_000
        for seed in range(draws):
            counts[frozenset(random_select(4, 2, seed=seed).subset)] += 1
        for subset, count in counts.items():
            assert abs(count / draws - 1 / 6) < 0.02, subset

    def test_marginal_inclusion_probability(self):
        n, budget, draws = 10, 3, 4000
        hits = np.zeros(n)
        for seed in range(draws):
            for i in random_select(n, budget, seed=seed).subset:
                hits[i] += 1
        freq = hits / draws
        # chi-square against the uniform marginal budget/n
        expected = budget / n
        chi2 = draws * float(((freq - expected) ** 2 / expected).sum())
        # 9 dof, alpha ~ 1e-4 -> critical value ~ 33.7
        assert chi2 < 33.7


class TestTopK:
    def test_gini_picks_most_uncertain(self):
        mat = ProbabilityMatrix(np.array([[1, 0], [0.5, 0.5], [0.8, 0.2]], dtype=float))
        assert gini_top_k(mat, 1).subset == (1,)

    def test_gini_tie_breaks_by_id(self):
        mat = ProbabilityMatrix(np.array([[0.5, 0.5]] * 4))
        assert gini_top_k(mat, 2).subset == (0, 1)

    def test_gini_full_budget(self):
        mat = ProbabilityMatrix(np.array([[0.5, 0.5]] * 3))
        assert sorted(gini_top_k(mat, 3).subset) == [0, 1, 2]

    def test_maxp_prefers_low_confidence(self):
        mat = ProbabilityMatrix(np.array([[1, 0], [0.6, 0.4]], dtype=float))
        assert maxp_top_k(mat, 1).subset == (1,)

    def test_maxp_one_hot_ties(self):
        mat = ProbabilityMatrix(np.eye(4))
        assert maxp_top_k(mat, 2).subset == (0, 1)

    def test_row_permutation_equivariant(self, rng):
        mat = random_probabilities(rng, 40, 5)
        base = set(gini_top_k(mat, 7).subset)
        perm = rng.permutation(40)
        permuted = ProbabilityMatrix(mat.values[perm])
        remapped = {int(perm[i]) for i in gini_top_k(permuted, 7).subset}
        assert remapped == base

    def test_binary_gini_equals_maxp(self, rng):
        # for two classes both scores are monotone in the max probability
        for trial in range(100):
            mat = random_probabilities(rng, 30, 2)
            assert gini_top_k(mat, 8).subset == maxp_top_k(mat, 8).subset


class TestWithFitness:
    def test_fills_objectives(self, rng):
        mat = random_probabilities(rng, 12, 3)
        feats = normalize_features(FeatureMatrix(rng.random((12, 4))))
        result = with_fitness(random_select(12, 4, seed=1), mat, feats)
        assert result.gini is not None and result.log_gd is not None
