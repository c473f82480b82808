"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately naive (pure-python cofactor determinants,
O(n^2) dominance scans, exhaustive sign enumeration) and never share code
with the package under test.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from deepselect import NormalizedFeatureMatrix, ProbabilityMatrix


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------

def cofactor_det(matrix: list[list[float]]) -> float:
    """Determinant by cofactor expansion along the first row."""
    size = len(matrix)
    if size == 1:
        return matrix[0][0]
    total = 0.0
    for col in range(size):
        minor = [row[:col] + row[col + 1 :] for row in matrix[1:]]
        sign = -1.0 if col % 2 else 1.0
        total += sign * matrix[0][col] * cofactor_det(minor)
    return total


def oracle_log_gd(feature_rows: np.ndarray, ids) -> float:
    """Brute-force log det of the subset Gram over plain python floats.

    Uses the same Gram shape convention as the implementation: k x k row
    Gram while k <= d, d x d feature Gram otherwise (identical at k = d).
    """
    rows = [[float(v) for v in feature_rows[i]] for i in ids]
    k, d = len(rows), len(rows[0])
    if k <= d:
        gram = [
            [sum(rows[a][t] * rows[b][t] for t in range(d)) for b in range(k)]
            for a in range(k)
        ]
    else:
        gram = [
            [sum(rows[r][a] * rows[r][b] for r in range(k)) for b in range(d)]
            for a in range(d)
        ]
    det = cofactor_det(gram)
    if det <= 0.0:
        return float("-inf")
    return math.log(det)


def oracle_subset_gini(prob_rows: np.ndarray, ids) -> float:
    scores = []
    for i in ids:
        scores.append(1.0 - sum(float(p) ** 2 for p in prob_rows[i]))
    return sum(scores) / len(scores)


def oracle_dominates(a, b) -> bool:
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


def oracle_fronts(fits: list[tuple[float, float]]) -> list[list[int]]:
    """Index partition into fronts by exhaustive pairwise dominance."""
    remaining = set(range(len(fits)))
    fronts = []
    while remaining:
        front = sorted(
            i
            for i in remaining
            if not any(oracle_dominates(fits[j], fits[i]) for j in remaining if j != i)
        )
        fronts.append(front)
        remaining -= set(front)
    return fronts


def oracle_dbscan(points: np.ndarray, eps: float, min_pts: int) -> list[set[int]]:
    """Reference density clustering returning the set partition (noise apart).

    Core points are density-connected through chains of core points within
    eps; border points join any cluster of a core neighbour.
    """
    count = len(points)
    dist = [
        [math.dist(points[i], points[j]) for j in range(count)] for i in range(count)
    ]
    neighbors = [
        {j for j in range(count) if dist[i][j] <= eps} for i in range(count)
    ]
    core = [len(neighbors[i]) >= min_pts for i in range(count)]
    # union-find over core points
    parent = list(range(count))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(count):
        if not core[i]:
            continue
        for j in neighbors[i]:
            if core[j]:
                union(i, j)
    clusters: dict[int, set[int]] = {}
    for i in range(count):
        if core[i]:
            clusters.setdefault(find(i), set()).add(i)
    for i in range(count):
        if core[i]:
            continue
        core_neigh = sorted(j for j in neighbors[i] if core[j])
        if core_neigh:
            clusters[find(core_neigh[0])].add(i)
    return list(clusters.values())


def partition_of(labels) -> list[set[int]]:
    """Group indices by label, noise (-1) excluded; order-insensitive form."""
    groups: dict[int, set[int]] = {}
    for i, lab in enumerate(labels):
        if lab != -1:
            groups.setdefault(int(lab), set()).add(i)
    return sorted(groups.values(), key=lambda s: min(s))


# --------------------------------------------------------------------------
# Data builders
# --------------------------------------------------------------------------

def random_probabilities(rng: np.random.Generator, n: int, m: int) -> ProbabilityMatrix:
    return ProbabilityMatrix(rng.dirichlet(np.ones(m), size=n))


def normalized(values) -> NormalizedFeatureMatrix:
    arr = np.asarray(values, dtype=np.float64)
    return NormalizedFeatureMatrix(arr)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


# --------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion in the summary
# --------------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    ACCEPTANCE_LINES.append(f"{status} - {name}{suffix}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
