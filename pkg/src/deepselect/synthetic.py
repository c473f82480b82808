"""Self-contained benchmark generator.

Builds a dataset where ground truth about faults is known by construction:

* features are tight Gaussian blobs in [0, 1]^d — one blob per planted fault
  cluster for the mispredicted inputs, plus background blobs for correctly
  predicted ones;
* each input gets a target uncertainty value; mispredicted inputs draw from
  a band shifted upward so that the point-biserial correlation between the
  Gini score and the misprediction indicator lands on a configurable target;
* fault-cluster sizes follow a geometric skew: a few large clusters hold
  most mispredictions while many clusters are tiny, and each cluster
  carries a small uncertainty offset that grows with its size.  The top of
  the uncertainty ranking is therefore dominated by members of the large
  clusters: top-k selection keeps re-revealing the same big faults — the
  redundancy regime this engine is built for — while the tiny clusters sit
  mid-band, reachable by a selector that trades a little uncertainty for
  feature-space coverage;
* probability rows realize the target Gini exactly: mass p on the predicted
  class and the rest spread uniformly, with p solved from the Gini value.

Everything is drawn from one seeded generator in a fixed order, and matrices
are written in the binary format, so regeneration with the same seed is byte
identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import write_dsm1, write_id_value_csv, write_manifest
from .errors import ConfigError

# Uncertainty-band geometry, in units of the maximum attainable Gini
# (1 - 1/m).  The windows overlap on purpose: separation comes from the
# mean shift computed from the correlation target, not from the bands.
CORRECT_MEAN = 0.50
CORRECT_WIDTH = 0.30
MIS_WIDTH = 0.16

# Geometric skew of fault-cluster sizes; every cluster keeps at least 2
# members and the remainder is split proportionally to ratio**index.
CLUSTER_SIZE_RATIO = 1.35

# Per-cluster uncertainty offset, +/- this value across the size order.
CLUSTER_OFFSET = 0.03

# Feature-space geometry.
BACKGROUND_BLOBS = 10
BLOB_SIGMA = 0.05


@dataclass(frozen=True)
class SyntheticDataset:
    probabilities: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    cluster_of: dict[int, int]
    total_faults: int
    seed: int
    params: dict


def _mean_shift(rho: float, rate: float, s_correct: float, s_mis: float) -> float:
    """Mean uncertainty gap between the groups for a point-biserial target.

    With group spreads s0/s1 and misprediction rate q, the correlation of a
    binary indicator with the score is rho = delta*k / sqrt(sw^2 + k^2*delta^2)
    where k = sqrt(q*(1-q)) and sw^2 is the within-group variance; solve for
    delta.
    """
    k = math.sqrt(rate * (1.0 - rate))
    sw = math.sqrt(rate * s_mis**2 + (1.0 - rate) * s_correct**2)
    return rho * sw / (k * math.sqrt(1.0 - rho * rho))


def _cluster_sizes(n_mis: int, faults: int) -> np.ndarray:
    """Skewed cluster sizes summing to n_mis, each at least 2 when possible."""
    if faults == 1:
        return np.array([n_mis], dtype=np.int64)
    if n_mis < 2 * faults:  # too few mispredictions to skew; spread evenly
        sizes = np.full(faults, n_mis // faults, dtype=np.int64)
        sizes[: n_mis % faults] += 1
        return sizes
    sizes = np.full(faults, 2, dtype=np.int64)
    remaining = n_mis - 2 * faults
    weights = CLUSTER_SIZE_RATIO ** np.arange(faults)
    extra = np.floor(remaining * weights / weights.sum()).astype(np.int64)
    sizes += extra
    sizes[-1] += remaining - int(extra.sum())
    return sizes


def _prob_rows(gini: np.ndarray, top_class: np.ndarray, m: int) -> np.ndarray:
    """Rows with mass p on ``top_class`` and (1-p)/(m-1) elsewhere, where p is
    solved so the row's Gini equals the target exactly."""
    # 1 - p^2 - (1-p)^2/(m-1) = g  =>  m*p^2 - 2p + 1 - (m-1)(1-g) = 0
    disc = 1.0 - m + m * (m - 1) * (1.0 - gini)
    p = (1.0 + np.sqrt(np.maximum(disc, 0.0))) / m
    n = gini.size
    rows = np.repeat(((1.0 - p) / (m - 1))[:, None], m, axis=1)
    rows[np.arange(n), top_class] = p
    return rows


def generate(
    n: int,
    m: int,
    d: int,
    faults: int,
    mispredict_rate: float,
    seed: int,
    correlation: float = 0.5,
) -> SyntheticDataset:
    if n < 2 or m < 2 or d < 1:
        raise ConfigError(f"need n >= 2, m >= 2, d >= 1; got n={n}, m={m}, d={d}")
    if faults < 1:
        raise ConfigError(f"faults must be >= 1, got {faults}")
    if not 0.0 < mispredict_rate < 1.0:
        raise ConfigError(f"mispredict-rate must be in (0, 1), got {mispredict_rate}")
    if not 0.0 <= correlation <= 0.9:
        raise ConfigError(f"correlation target must be in [0, 0.9], got {correlation}")
    n_mis = int(round(n * mispredict_rate))
    if n_mis < faults:
        raise ConfigError(
            f"{faults} fault clusters need at least {faults} mispredictions, "
            f"got round({n} * {mispredict_rate}) = {n_mis}"
        )
    if n_mis >= n:
        raise ConfigError("mispredict-rate leaves no correctly predicted inputs")

    rng = np.random.default_rng(seed)

    # Draw order is fixed: membership, blob layout, labels, uncertainty noise.
    mis_ids = np.sort(rng.choice(n, size=n_mis, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[mis_ids] = True

    sizes = _cluster_sizes(n_mis, faults)
    cluster_assign = np.repeat(np.arange(faults), sizes)
    rng.shuffle(cluster_assign)
    cluster_of = {int(i): int(c) for i, c in zip(mis_ids, cluster_assign)}

    fault_centers = rng.uniform(0.1, 0.9, size=(faults, d))
    bg_centers = rng.uniform(0.1, 0.9, size=(BACKGROUND_BLOBS, d))
    bg_assign = rng.integers(0, BACKGROUND_BLOBS, size=n - n_mis)

    centers = np.empty((n, d))
    centers[mis_ids] = fault_centers[cluster_assign]
    centers[~mask] = bg_centers[bg_assign]
    features = centers + rng.normal(0.0, BLOB_SIGMA, size=(n, d))

    labels = rng.integers(0, m, size=n)

    gmax = 1.0 - 1.0 / m
    # clusters are indexed by ascending size, so the offset grows with size;
    # the offset mean and variance are folded into the correlation solve
    offsets = CLUSTER_OFFSET * np.linspace(-1.0, 1.0, faults)
    mean_off = float(np.average(offsets, weights=sizes))
    var_off = float(np.average((offsets - mean_off) ** 2, weights=sizes))
    s_correct = CORRECT_WIDTH / math.sqrt(12.0)
    s_mis = math.sqrt(MIS_WIDTH**2 / 12.0 + var_off)
    shift = _mean_shift(correlation, n_mis / n, s_correct, s_mis)

    gini = np.empty(n)
    gini[~mask] = CORRECT_MEAN + rng.uniform(
        -CORRECT_WIDTH / 2, CORRECT_WIDTH / 2, size=n - n_mis
    )
    gini[mis_ids] = (
        CORRECT_MEAN
        + shift
        - mean_off
        + offsets[cluster_assign]
        + rng.uniform(-MIS_WIDTH / 2, MIS_WIDTH / 2, size=n_mis)
    )
    np.clip(gini, 0.01, 0.99, out=gini)
    gini *= gmax

    top_class = labels.copy()
    wrong = (labels[mis_ids] + 1 + cluster_assign % (m - 1)) % m
    top_class[mis_ids] = wrong
    probabilities = _prob_rows(gini, top_class, m)

    return SyntheticDataset(
        probabilities=probabilities,
        features=features,
        labels=labels,
        mask=mask,
        cluster_of=cluster_of,
        total_faults=faults,
        seed=seed,
        params={
            "n": n,
            "m": m,
            "d": d,
            "faults": faults,
            "mispredict_rate": mispredict_rate,
            "correlation": correlation,
        },
    )


def write_dataset(
    dataset: SyntheticDataset,
    out_dir: str | Path,
    budget: int = 100,
    method: str = "deepgd",
) -> Path:
    """Write matrices, labels, clusters, and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dsm1(out / "probabilities.dsm1", dataset.probabilities)
    write_dsm1(out / "features.dsm1", dataset.features)
    write_id_value_csv(
        out / "labels.csv",
        [(i, int(v)) for i, v in enumerate(dataset.labels)],
    )
    write_id_value_csv(
        out / "clusters.csv", sorted(dataset.cluster_of.items())
    )
    manifest_path = out / "manifest.json"
    write_manifest(
        manifest_path,
        {
            "probabilities": "probabilities.dsm1",
            "features": "features.dsm1",
            "labels": "labels.csv",
            "clusters": "clusters.csv",
            "budget": budget,
            "seed": dataset.seed,
            "method": method,
            "total_faults": dataset.total_faults,
            "n": int(dataset.probabilities.shape[0]),
            "m": int(dataset.probabilities.shape[1]),
            "d": int(dataset.features.shape[1]),
            "params": dataset.params,
        },
    )
    return manifest_path
