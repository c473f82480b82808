"""Scoring of selections against fault-cluster labels.

A fault is a cluster of feature-similar mispredicted inputs; a selection
reveals a fault when it contains at least one mispredicted member of that
cluster.  The fault detection rate divides the number of revealed faults by
the best the selection could possibly do, min(subset size, total faults).

The module also bundles a density clusterer usable as a stand-in fault
estimator when no external cluster labels exist, repeated-run stability
summaries, and an exact/approximate Wilcoxon signed-rank test for paired
method comparisons.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fitness
from .data_model import (
    FaultPartition,
    NOISE,
    NormalizedFeatureMatrix,
    ProbabilityMatrix,
    SelectionResult,
    _json_float,
    validate_labels,
)
from .errors import ConfigError, CoverageError, SampleSizeError, ShapeError


@dataclass(frozen=True)
class EvalReport:
    """Scores of one selection run."""

    method: str
    budget: int
    fdr: float
    faults_revealed: int
    mispredictions: int
    log_gd: float | None
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "budget": self.budget,
            "fdr": self.fdr,
            "faults_revealed": self.faults_revealed,
            "mispredictions": self.mispredictions,
            "log_gd": _json_float(self.log_gd),
            "seed": self.seed,
        }

    CSV_FIELDS = ("method", "run", "seed", "budget", "fdr", "faults_revealed",
                  "mispredictions", "log_gd")

    def csv_row(self, run_index: int) -> list:
        return [
            self.method,
            run_index,
            self.seed,
            self.budget,
            f"{self.fdr:.6f}",
            self.faults_revealed,
            self.mispredictions,
            "" if self.log_gd is None else f"{self.log_gd:.6f}",
        ]


@dataclass(frozen=True)
class StabilityStats:
    """Spread of a score across repeated runs (sample std, n-1 denominator)."""

    mean: float
    min: float
    max: float
    std: float

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "min": self.min, "max": self.max, "std": self.std}


# --------------------------------------------------------------------------
# Fault detection
# --------------------------------------------------------------------------

def faults_revealed(
    subset: Sequence[int], mask: np.ndarray, partition: FaultPartition
) -> set[int]:
    """Distinct non-noise cluster ids among the subset's mispredicted members."""
    revealed: set[int] = set()
    for i in subset:
        i = int(i)
        if not 0 <= i < len(mask):
            raise IndexError(f"selection id {i} outside [0, {len(mask)})")
        if not mask[i]:
            continue
        if i not in partition.clusters:
            raise CoverageError(f"mispredicted input {i} has no fault-cluster label")
        cluster = partition.clusters[i]
        if cluster != NOISE:
            revealed.add(cluster)
    return revealed


def fault_detection_rate(
    subset: Sequence[int], mask: np.ndarray, partition: FaultPartition
) -> float:
    """Revealed faults over min(|subset|, total faults)."""
    if partition.total_faults < 1:
        raise ConfigError("total_faults must be >= 1 to compute a detection rate")
    revealed = faults_revealed(subset, mask, partition)
    return len(revealed) / min(len(subset), partition.total_faults)


def evaluate_selection(
    result: SelectionResult,
    mask: np.ndarray,
    partition: FaultPartition,
    features: NormalizedFeatureMatrix | None = None,
) -> EvalReport:
    """Full report for one selection: FDR, fault and misprediction counts."""
    revealed = faults_revealed(result.subset, mask, partition)
    if partition.total_faults < 1:
        raise ConfigError("total_faults must be >= 1 to compute a detection rate")
    fdr = len(revealed) / min(len(result.subset), partition.total_faults)
    mispredictions = int(sum(1 for i in result.subset if mask[int(i)]))
    log_gd = result.log_gd
    if log_gd is None and features is not None:
        log_gd = selection_diversity(features, result.subset)
    return EvalReport(
        method=result.method,
        budget=result.budget,
        fdr=fdr,
        faults_revealed=len(revealed),
        mispredictions=mispredictions,
        log_gd=log_gd,
        seed=result.seed,
    )


def selection_diversity(
    features: NormalizedFeatureMatrix, subset: Sequence[int]
) -> float:
    """Diversity score of a selected subset (log geometric diversity)."""
    return fitness.log_geometric_diversity(features, subset)


# --------------------------------------------------------------------------
# Stand-in fault estimation
# --------------------------------------------------------------------------

def build_fault_features(
    features: NormalizedFeatureMatrix,
    labels: Sequence[int] | np.ndarray,
    probabilities: ProbabilityMatrix,
    mask: np.ndarray,
    class_weight: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for clustering mispredictions: per mispredicted input, its
    normalized features plus the actual and predicted class, each scaled to
    [0, 1] by c/(m-1) and multiplied by ``class_weight``.

    Returns (ids, rows) where ids are the mispredicted input ids in order.
    """
    from .data_model import predicted_classes

    y = validate_labels(labels, probabilities.n, probabilities.m)
    if features.n != probabilities.n or len(mask) != probabilities.n:
        raise ShapeError("features, probabilities and mask disagree on input count")
    ids = np.flatnonzero(np.asarray(mask, dtype=bool))
    if ids.size == 0:
        return ids, np.empty((0, features.d + 2))
    preds = predicted_classes(probabilities)
    scale = class_weight / max(probabilities.m - 1, 1)
    extra = np.column_stack((y[ids] * scale, preds[ids] * scale))
    return ids, np.column_stack((features.values[ids], extra))


def dbscan_cluster(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Textbook density clustering; label -1 marks noise.

    A point is core when at least ``min_pts`` points (itself included) lie
    within Euclidean distance ``eps``.  Clusters are grown breadth-first from
    core points in input order, so the labelling is deterministic for a fixed
    point order, and the induced partition does not depend on that order.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {pts.shape}")
    count = pts.shape[0]
    if count == 0:
        return np.empty(0, dtype=np.int64)

    sq = (pts * pts).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)
    adjacency = d2 <= eps * eps
    neighbor_counts = adjacency.sum(axis=1)

    UNSEEN = -2
    labels = np.full(count, UNSEEN, dtype=np.int64)
    cluster = 0
    for start in range(count):
        if labels[start] != UNSEEN:
            continue
        if neighbor_counts[start] < min_pts:
            labels[start] = NOISE
            continue
        labels[start] = cluster
        queue = deque(np.flatnonzero(adjacency[start]).tolist())
        while queue:
            q = queue.popleft()
            if labels[q] == NOISE:
                labels[q] = cluster  # border point adopted by the cluster
            if labels[q] != UNSEEN:
                continue
            labels[q] = cluster
            if neighbor_counts[q] >= min_pts:
                queue.extend(np.flatnonzero(adjacency[q]).tolist())
        cluster += 1
    return labels


# --------------------------------------------------------------------------
# Run statistics
# --------------------------------------------------------------------------

def stability_stats(values: Sequence[float]) -> StabilityStats:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise ValueError(f"stability needs at least 2 runs, got {arr.size}")
    return StabilityStats(
        mean=float(arr.mean()),
        min=float(arr.min()),
        max=float(arr.max()),
        std=float(arr.std(ddof=1)),
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their midrank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    pairs: Sequence[tuple[float, float]],
    alternative: str = "two-sided",
    exact_limit: int = 20,
) -> float:
    """Paired signed-rank test p-value on (a, b) observations.

    Zero differences are dropped and tied absolute differences midranked.
    The null distribution is enumerated exactly up to ``exact_limit``
    non-zero pairs and approximated by a tie-corrected normal with continuity
    correction beyond.  ``alternative`` is two-sided, or one-sided 'greater' /
    'less' for the a-minus-b difference.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    diffs = np.array([float(a) - float(b) for a, b in pairs])
    diffs = diffs[diffs != 0.0]
    n = diffs.size
    if n < 5:
        raise SampleSizeError(
            f"need at least 5 non-zero differences, got {n}"
        )
    ranks = _midranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())

    if n <= exact_limit:
        return _exact_signed_rank_p(ranks, w_plus, alternative)

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    sd = math.sqrt(var)
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / sd
        return _norm_sf(z)
    if alternative == "less":
        z = (w_plus - mean + 0.5) / sd
        return _norm_cdf(z)
    correction = 0.5 * math.copysign(1.0, w_plus - mean) if w_plus != mean else 0.0
    z = (w_plus - mean - correction) / sd
    return min(1.0, 2.0 * _norm_sf(abs(z)))


def _exact_signed_rank_p(ranks: np.ndarray, w_plus: float, alternative: str) -> float:
    # Midranks are multiples of 1/2, so doubling gives exact integers and the
    # distribution of 2*W+ under random signs is a small counting problem.
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    upto = 0
    for r in doubled:
        nxt = counts.copy()
        nxt[r : upto + r + 1] += counts[: upto + 1]
        counts = nxt
        upto += r
    counts /= 2.0 ** len(doubled)
    w2 = int(round(2.0 * w_plus))
    p_ge = float(counts[w2:].sum())
    p_le = float(counts[: w2 + 1].sum())
    if alternative == "greater":
        return p_ge
    if alternative == "less":
        return p_le
    return min(1.0, 2.0 * min(p_ge, p_le))


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
