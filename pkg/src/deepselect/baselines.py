"""Black-box comparison selectors: random, Gini top-k, max-probability top-k."""

from __future__ import annotations

import numpy as np

from . import fitness
from .data_model import NormalizedFeatureMatrix, ProbabilityMatrix, SelectionResult
from .errors import BudgetError

BASELINE_METHODS = ("random", "gini", "maxp")


def _check_budget(n: int, budget: int) -> None:
    if not 1 <= budget <= n:
        raise BudgetError(f"budget must be in [1, {n}], got {budget}")


def random_select(n: int, budget: int, seed: int) -> SelectionResult:
    """Uniform subset of ``budget`` ids drawn without replacement."""
    _check_budget(n, budget)
    rng = np.random.default_rng(seed)
    subset = rng.choice(n, size=budget, replace=False)
    return SelectionResult(
        subset=tuple(int(i) for i in subset), method="random", budget=budget, seed=seed
    )


def _top_k(scores: np.ndarray, budget: int) -> np.ndarray:
    # highest score first, ties by ascending id
    n = scores.size
    order = np.lexsort((np.arange(n), -scores))
    return order[:budget]


def gini_top_k(
    probabilities: ProbabilityMatrix, budget: int, seed: int = 0
) -> SelectionResult:
    """The ``budget`` inputs with the highest Gini uncertainty."""
    _check_budget(probabilities.n, budget)
    subset = _top_k(fitness.gini_rows(probabilities), budget)
    return SelectionResult(
        subset=tuple(int(i) for i in subset), method="gini", budget=budget, seed=seed
    )


def maxp_top_k(
    probabilities: ProbabilityMatrix, budget: int, seed: int = 0
) -> SelectionResult:
    """The ``budget`` inputs with the lowest top-class probability.

    Score is 1 - max_i p_i; for two classes this orders identically to the
    Gini score.
    """
    _check_budget(probabilities.n, budget)
    scores = 1.0 - probabilities.values.max(axis=1)
    subset = _top_k(scores, budget)
    return SelectionResult(
        subset=tuple(int(i) for i in subset), method="maxp", budget=budget, seed=seed
    )


def with_fitness(
    result: SelectionResult,
    probabilities: ProbabilityMatrix,
    features: NormalizedFeatureMatrix | None = None,
) -> SelectionResult:
    """Return a copy of ``result`` with its objective values filled in."""
    from dataclasses import replace

    gini = fitness.subset_gini(probabilities, result.subset)
    log_gd = (
        fitness.log_geometric_diversity(features, result.subset)
        if features is not None
        else None
    )
    return replace(result, gini=gini, log_gd=log_gd)
