"""Shared domain types, file formats, and input validation.

Numeric matrices travel in one of two formats:

* CSV — comma separated, row major, UTF-8, with an optional single header
  line starting with ``#``.  Values are written with 12 significant digits.
* "DSM1" binary — magic bytes ``DSM1``, then two little-endian u64 giving the
  row and column counts, then ``rows*cols`` little-endian float64 values in
  row-major order.  Round trips are bit exact.

Label and cluster files are two-column ``id,value`` CSVs; cluster value -1
means noise.  Input ids are always 0-based row indices into the matrices.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CoverageError,
    ManifestError,
    ShapeError,
    StochasticityError,
)

#: Cluster label given to mispredicted inputs that belong to no fault cluster.
NOISE = -1

DSM1_MAGIC = b"DSM1"

#: Maximum tolerated deviation of a probability row sum from 1.
ROW_SUM_TOL = 1e-5

# Rows already within a few ulps of 1 are left untouched so that
# load -> write -> load is bit-stable.
_EXACT_SUM_TOL = 1e-12


# --------------------------------------------------------------------------
# Raw matrix IO
# --------------------------------------------------------------------------

def write_dsm1(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D float64 matrix in the DSM1 binary format."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    if arr.ndim != 2:
        raise ShapeError(f"DSM1 stores 2-D matrices, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(DSM1_MAGIC)
        fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_dsm1(path: str | Path) -> np.ndarray:
    """Read a DSM1 matrix; raises ShapeError on malformed headers."""
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != DSM1_MAGIC:
        raise ShapeError(f"{path}: not a DSM1 file")
    rows, cols = struct.unpack("<QQ", raw[4:20])
    expected = 20 + rows * cols * 8
    if len(raw) != expected:
        raise ShapeError(
            f"{path}: DSM1 payload is {len(raw) - 20} bytes, "
            f"expected {rows}x{cols}x8"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=20)
    return data.reshape(rows, cols).copy()


def write_matrix_csv(path: str | Path, values: np.ndarray, header: str | None = None) -> None:
    """Write a matrix as CSV with 12 significant digits per value."""
    arr = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for row in arr:
            fh.write(",".join(f"{v:.12g}" for v in row))
            fh.write("\n")


def _read_matrix_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ShapeError(
                    f"{path}:{lineno}: ragged row of {len(row)} values, "
                    f"expected {width}"
                )
            rows.append(row)
    if not rows:
        raise ShapeError(f"{path}: no numeric rows")
    return np.asarray(rows, dtype=np.float64)


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix from either supported format, sniffing the magic bytes."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == DSM1_MAGIC:
        return read_dsm1(path)
    return _read_matrix_csv(path)


def write_id_value_csv(path: str | Path, pairs: Sequence[tuple[int, int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,value\n")
        for i, v in pairs:
            fh.write(f"{i},{v}\n")


def read_id_value_csv(path: str | Path) -> dict[int, int]:
    """Read an ``id,value`` CSV; a header line is optional."""
    out: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ShapeError(f"{path}:{lineno}: expected two columns")
            if lineno == 1 and not parts[0].strip().lstrip("-").isdigit():
                continue  # header
            try:
                key, val = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate id {key}")
            out[key] = val
    return out


# --------------------------------------------------------------------------
# Matrices
# --------------------------------------------------------------------------

class ProbabilityMatrix:
    """Row-stochastic matrix of per-input class probabilities.

    Rows whose sum deviates from 1 by more than a few ulps but at most
    ``ROW_SUM_TOL`` are silently renormalized; larger deviations raise
    :class:`StochasticityError`.  Values are immutable after construction.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"probabilities must be 2-D, got shape {arr.shape}")
        n, m = arr.shape
        if n < 1 or m < 2:
            raise ShapeError(f"need n >= 1 and m >= 2 classes, got {n}x{m}")
        if not np.isfinite(arr).all():
            raise ValueError("probabilities contain NaN or Inf")
        if arr.min() < -1e-9 or arr.max() > 1 + 1e-9:
            bad = int(np.argmax((arr < -1e-9) | (arr > 1 + 1e-9)))
            raise ValueError(
                f"probability entries outside [0, 1] (first offender in row {bad // m})"
            )
        sums = arr.sum(axis=1)
        dev = np.abs(sums - 1.0)
        if (dev > ROW_SUM_TOL).any():
            i = int(np.argmax(dev))
            raise StochasticityError(
                f"row {i} sums to {sums[i]:.8f}, off by more than {ROW_SUM_TOL}"
            )
        fix = dev > _EXACT_SUM_TOL
        if fix.any():
            arr[fix] = arr[fix] / sums[fix, None]
        np.clip(arr, 0.0, 1.0, out=arr)
        arr.setflags(write=False)
        self.values = arr

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"input id {i} outside [0, {self.n})")
        return self.values[i]


class FeatureMatrix:
    """Per-input feature vectors, one row per input, finite values only."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"empty feature matrix: shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("features contain NaN or Inf")
        arr.setflags(write=False)
        self.values = arr

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


class NormalizedFeatureMatrix(FeatureMatrix):
    """Feature matrix min-max scaled per column to [0, 1].

    Constant columns are all-zero by convention.  Construct via
    :func:`deepselect.fitness.normalize_features`.
    """

    __slots__ = ()

    def __init__(self, values: np.ndarray):
        super().__init__(values)
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("normalized features must lie in [0, 1]")


def load_probability_matrix(path: str | Path) -> ProbabilityMatrix:
    """Load and validate a probability matrix from CSV or DSM1."""
    return ProbabilityMatrix(read_matrix(path))


def load_feature_matrix(path: str | Path) -> FeatureMatrix:
    """Load and validate a feature matrix from CSV or DSM1."""
    return FeatureMatrix(read_matrix(path))


# --------------------------------------------------------------------------
# Labels, predictions, fault partitions
# --------------------------------------------------------------------------

def validate_labels(labels: Sequence[int] | np.ndarray, n: int, m: int) -> np.ndarray:
    """Check ground-truth labels: length n, every value a class id in [0, m)."""
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ShapeError(f"expected {n} labels, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= m):
        raise ValueError(f"label outside [0, {m})")
    return arr


def load_labels(path: str | Path, n: int, m: int) -> np.ndarray:
    """Load ground-truth labels from an ``id,value`` CSV covering all n ids."""
    mapping = read_id_value_csv(path)
    if sorted(mapping) != list(range(n)):
        raise ShapeError(f"{path}: label ids must be exactly 0..{n - 1}")
    return validate_labels([mapping[i] for i in range(n)], n, m)


def predicted_class(probabilities: ProbabilityMatrix, i: int) -> int:
    """Predicted class of input i: argmax of its row, ties to the lowest index."""
    return int(np.argmax(probabilities.row(i)))


def predicted_classes(probabilities: ProbabilityMatrix) -> np.ndarray:
    """Vectorized argmax per row with the same lowest-index tie rule."""
    return np.argmax(probabilities.values, axis=1)


def misprediction_mask(
    probabilities: ProbabilityMatrix, labels: Sequence[int] | np.ndarray
) -> np.ndarray:
    """Boolean mask: True where the predicted class differs from the label."""
    y = validate_labels(labels, probabilities.n, probabilities.m)
    return predicted_classes(probabilities) != y


@dataclass(frozen=True)
class FaultPartition:
    """Fault-cluster labels for mispredicted inputs.

    ``clusters`` maps mispredicted input ids to cluster ids (>= 0, or NOISE).
    ``total_faults`` is the number of distinct non-noise clusters, unless a
    manifest pins a whole-dataset fault census computed elsewhere.
    """

    clusters: Mapping[int, int]
    total_faults: int

    @classmethod
    def from_labels(
        cls, clusters: Mapping[int, int], total_faults: int | None = None
    ) -> "FaultPartition":
        distinct = {c for c in clusters.values() if c != NOISE}
        if total_faults is None:
            total_faults = len(distinct)
        return cls(clusters=dict(clusters), total_faults=total_faults)

    def validate_against_mask(self, mask: np.ndarray) -> None:
        """Every labelled id must be mispredicted; raises CoverageError otherwise."""
        for i in self.clusters:
            if not 0 <= i < len(mask):
                raise CoverageError(f"cluster label for unknown input id {i}")
            if not mask[i]:
                raise CoverageError(
                    f"input {i} has a fault-cluster label but is not mispredicted"
                )


def load_fault_partition(
    path: str | Path, total_faults: int | None = None
) -> FaultPartition:
    return FaultPartition.from_labels(read_id_value_csv(path), total_faults)


# --------------------------------------------------------------------------
# Selections and manifests
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionResult:
    """A selected subset together with how it was produced."""

    subset: tuple[int, ...]
    method: str
    budget: int
    seed: int
    gini: float | None = None
    log_gd: float | None = None
    params: dict | None = None

    def __post_init__(self):
        if len(self.subset) != self.budget:
            raise ShapeError(
                f"subset has {len(self.subset)} ids, budget is {self.budget}"
            )
        if len(set(self.subset)) != len(self.subset):
            raise ValueError("subset ids must be distinct")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "budget": self.budget,
            "seed": self.seed,
            "fitness": {
                "gini": _json_float(self.gini),
                "log_gd": _json_float(self.log_gd),
            },
            "params": self.params,
        }


def _json_float(v: float | None):
    # JSON has no Infinity literal; the sentinel travels as a string.
    if v is None:
        return None
    if v == float("-inf"):
        return "-inf"
    if v == float("inf"):
        return "inf"
    return float(v)


def write_selection_csv(path: str | Path, subset: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\n")
        for i in subset:
            fh.write(f"{i}\n")


def read_selection_csv(path: str | Path) -> list[int]:
    ids: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower() == "id":
                continue
            try:
                ids.append(int(line.split(",")[0]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return ids


@dataclass(frozen=True)
class RunManifest:
    """Paths and parameters describing one selection/evaluation run.

    Paths are stored resolved against the manifest's own directory.
    """

    probabilities: Path
    features: Path
    labels: Path | None = None
    clusters: Path | None = None
    budget: int | None = None
    seed: int = 0
    method: str = "deepgd"
    total_faults: int | None = None
    n: int | None = None
    m: int | None = None
    d: int | None = None
    params: dict = field(default_factory=dict)


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    for key in ("probabilities", "features"):
        if key not in doc:
            raise ManifestError(f"{path}: missing required field '{key}'")
    base = path.parent

    def _path(key: str) -> Path | None:
        if doc.get(key) is None:
            return None
        return (base / str(doc[key])).resolve()

    def _opt_int(key: str) -> int | None:
        return None if doc.get(key) is None else int(doc[key])

    return RunManifest(
        probabilities=_path("probabilities"),
        features=_path("features"),
        labels=_path("labels"),
        clusters=_path("clusters"),
        budget=_opt_int("budget"),
        seed=int(doc.get("seed", 0)),
        method=str(doc.get("method", "deepgd")),
        total_faults=_opt_int("total_faults"),
        n=_opt_int("n"),
        m=_opt_int("m"),
        d=_opt_int("d"),
        params=dict(doc.get("params") or {}),
    )


def write_manifest(path: str | Path, doc: dict) -> None:
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True)
class LoadedRun:
    """All inputs of a run loaded and cross-validated."""

    manifest: RunManifest
    probabilities: ProbabilityMatrix
    features: FeatureMatrix
    labels: np.ndarray | None
    partition: FaultPartition | None


def load_run(manifest: RunManifest, require_labels: bool = False) -> LoadedRun:
    """Load every file a manifest names and check the shapes agree."""
    probs = load_probability_matrix(manifest.probabilities)
    feats = load_feature_matrix(manifest.features)
    if feats.n != probs.n:
        raise ShapeError(
            f"features have {feats.n} rows but probabilities have {probs.n}"
        )
    for declared, actual, name in (
        (manifest.n, probs.n, "n"),
        (manifest.m, probs.m, "m"),
        (manifest.d, feats.d, "d"),
    ):
        if declared is not None and declared != actual:
            raise ManifestError(
                f"manifest declares {name}={declared} but files have {name}={actual}"
            )
    labels = None
    if manifest.labels is not None:
        labels = load_labels(manifest.labels, probs.n, probs.m)
    elif require_labels:
        raise ManifestError("manifest names no ground-truth labels file")
    partition = None
    if manifest.clusters is not None:
        partition = load_fault_partition(manifest.clusters, manifest.total_faults)
    return LoadedRun(
        manifest=manifest,
        probabilities=probs,
        features=feats,
        labels=labels,
        partition=partition,
    )
