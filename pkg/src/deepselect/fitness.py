"""The two selection objectives: output uncertainty and feature diversity.

Uncertainty of one input is its Gini impurity, 1 - sum(p_i^2), over the
class-probability row; a subset scores the mean over its members.

Diversity of a subset is the log-determinant of the Gram matrix of its
min-max-normalized feature rows.  For a subset of k rows in d feature
dimensions the k x k row Gram is used while k <= d; for k > d that matrix is
rank deficient by shape alone, so the d x d feature-space Gram is used
instead (by Cauchy-Binet its determinant is the total squared volume over
all d-row sub-parallelepipeds, and the two determinants coincide at k = d).
All comparisons happen in the log domain: raw determinants overflow float64
for budgets in the hundreds, and log is monotone so every ordering the
search relies on is unchanged.

A Gram matrix that is singular to working precision (duplicate rows, rows
inside a common hyperplane) yields ``-inf``, which sorts below every finite
diversity value and ties with itself.  No jitter is added: regularizing
would make degenerate subsets spuriously comparable.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .data_model import (
    FeatureMatrix,
    NormalizedFeatureMatrix,
    ProbabilityMatrix,
    ROW_SUM_TOL,
)
from .errors import EmptySubsetError, MembershipError

NEG_INF = float("-inf")

# A Cholesky pivot below this declares the Gram matrix singular.
SINGULAR_PIVOT = 1e-12


class FitnessPair(NamedTuple):
    """Objective values of one subset; both are maximized."""

    gini: float
    log_gd: float


# --------------------------------------------------------------------------
# Uncertainty
# --------------------------------------------------------------------------

def gini_score(row: Sequence[float] | np.ndarray) -> float:
    """Gini impurity of one class-probability row: 1 - sum(p_i^2).

    Ranges from 0 (one-hot) to 1 - 1/m (uniform).  The row must be a valid
    distribution: non-negative entries summing to 1 within tolerance.
    """
    arr = np.asarray(row, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"expected a distribution over >= 2 classes, got shape {arr.shape}")
    if arr.min() < -1e-9 or abs(arr.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"not a probability distribution (sum {arr.sum():.8f})")
    return float(1.0 - (arr * arr).sum())


def gini_rows(probabilities: ProbabilityMatrix) -> np.ndarray:
    """Per-input Gini scores for an already-validated matrix (no re-check)."""
    v = probabilities.values
    return 1.0 - (v * v).sum(axis=1)


def subset_gini(probabilities: ProbabilityMatrix, subset: Sequence[int]) -> float:
    """Mean Gini score over the subset's members."""
    ids = _checked_ids(subset, probabilities.n)
    return float(gini_rows(probabilities)[ids].mean())


# --------------------------------------------------------------------------
# Diversity
# --------------------------------------------------------------------------

def normalize_features(features: FeatureMatrix) -> NormalizedFeatureMatrix:
    """Min-max scale each column to [0, 1]; constant columns become all zero."""
    v = features.values
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    span = hi - lo
    out = np.zeros_like(v)
    nonconst = span > 0
    out[:, nonconst] = (v[:, nonconst] - lo[nonconst]) / span[nonconst]
    return NormalizedFeatureMatrix(out)


def _log_det_gram(rows: np.ndarray) -> float:
    """log det of the subset Gram, or -inf when singular to working precision."""
    k, d = rows.shape
    gram = rows @ rows.T if k <= d else rows.T @ rows
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return NEG_INF
    diag = np.diagonal(chol)
    if (diag * diag).min() < SINGULAR_PIVOT:
        return NEG_INF
    return float(2.0 * np.log(diag).sum())


def log_geometric_diversity(
    features: NormalizedFeatureMatrix, subset: Sequence[int]
) -> float:
    """Log-domain geometric diversity of a subset (see module docstring)."""
    ids = _checked_ids(subset, features.n)
    return _log_det_gram(features.values[ids])


def log_gd_batch(feature_values: np.ndarray, genes: np.ndarray) -> np.ndarray:
    """Vectorized log_geometric_diversity for a stack of equal-size subsets.

    ``genes`` has shape (count, k).  Matches the scalar routine bit for bit:
    the batched Cholesky runs the same factorization per slice.  Falls back
    to per-subset evaluation when any slice in the batch is not positive
    definite.
    """
    rows = feature_values[genes]  # (count, k, d)
    _, k, d = rows.shape
    if k <= d:
        grams = rows @ rows.transpose(0, 2, 1)
    else:
        grams = rows.transpose(0, 2, 1) @ rows
    try:
        chols = np.linalg.cholesky(grams)
    except np.linalg.LinAlgError:
        return np.array([_log_det_gram(r) for r in rows])
    diag = np.diagonal(chols, axis1=1, axis2=2)
    out = 2.0 * np.log(diag).sum(axis=1)
    out[(diag * diag).min(axis=1) < SINGULAR_PIVOT] = NEG_INF
    return out


def gd_contribution(
    features: NormalizedFeatureMatrix, subset: Sequence[int], member: int
) -> float:
    """Diversity contribution of one member: log GD(S) - log GD(S without it).

    Lower means more redundant.  A duplicated row makes the full subset
    singular while the remainder is not, giving -inf, which orders the
    duplicate below every finite contribution.  When both determinants are
    singular there is no signal and the contribution is 0.
    """
    ids = _checked_ids(subset, features.n)
    if len(ids) < 2:
        raise EmptySubsetError("contribution needs a subset of at least 2 ids")
    where = np.flatnonzero(ids == member)
    if where.size == 0:
        raise MembershipError(f"id {member} is not in the subset")
    full = _log_det_gram(features.values[ids])
    rest = _log_det_gram(features.values[np.delete(ids, where[0])])
    diff = full - rest
    return 0.0 if np.isnan(diff) else float(diff)


def gd_contributions_all(feature_values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Contribution of every member of one subset, computed in one pass.

    Uses the Gram-inverse identities det(G[-i,-i]) = det(G) * inv(G)[i,i]
    (row Gram) and det(G - x x^T) = det(G) * (1 - x^T inv(G) x) (feature
    Gram), so one factorization prices all leave-one-out determinants.
    Falls back to direct per-member evaluation when the full Gram is
    singular.  Values agree with :func:`gd_contribution` up to rounding;
    callers only rank by them.
    """
    rows = feature_values[ids]
    k, d = rows.shape
    full = _log_det_gram(rows)
    if full == NEG_INF:
        out = np.empty(k)
        for j in range(k):
            rest = _log_det_gram(np.delete(rows, j, axis=0))
            diff = full - rest
            out[j] = 0.0 if np.isnan(diff) else diff
        return out
    if k <= d:
        gram = rows @ rows.T
        inv_diag = np.diagonal(np.linalg.inv(gram)).copy()
        # det(rest) = det(full) * inv_diag -> contribution = -log(inv_diag)
        inv_diag[inv_diag <= 0] = np.nan  # numerically impossible for PD, be safe
        out = -np.log(inv_diag)
    else:
        gram = rows.T @ rows
        solved = np.linalg.solve(gram, rows.T)  # (d, k)
        leverage = np.einsum("ij,ji->i", rows, solved)
        rem = 1.0 - leverage
        out = np.where(rem > 0, -np.log(np.maximum(rem, 1e-300)), np.inf)
    return np.nan_to_num(out, nan=0.0, posinf=np.inf, neginf=NEG_INF)


def evaluate_fitness(
    probabilities: ProbabilityMatrix,
    features: NormalizedFeatureMatrix,
    subset: Sequence[int],
) -> FitnessPair:
    """Both objective values for one subset."""
    return FitnessPair(
        gini=subset_gini(probabilities, subset),
        log_gd=log_geometric_diversity(features, subset),
    )


def _checked_ids(subset: Sequence[int], n: int) -> np.ndarray:
    ids = np.asarray(subset, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise EmptySubsetError("subset must contain at least one id")
    if ids.min() < 0 or ids.max() >= n:
        raise IndexError(f"subset id outside [0, {n})")
    if np.unique(ids).size != ids.size:
        raise ValueError("subset ids must be distinct")
    return ids
