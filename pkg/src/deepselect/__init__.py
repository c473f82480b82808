"""deepselect: black-box test-input selection for classifiers.

Selects a fixed-budget subset of inputs that jointly maximizes prediction
uncertainty and feature diversity with a customized multi-objective genetic
search, and scores any selection by its fault detection rate against
fault-cluster labels.
"""

from .baselines import gini_top_k, maxp_top_k, random_select
from .data_model import (
    FaultPartition,
    FeatureMatrix,
    NOISE,
    NormalizedFeatureMatrix,
    ProbabilityMatrix,
    RunManifest,
    SelectionResult,
    load_feature_matrix,
    load_manifest,
    load_probability_matrix,
    misprediction_mask,
    predicted_class,
)
from .errors import (
    BudgetError,
    ConfigError,
    CoverageError,
    DeepSelectError,
    EmptyFrontError,
    EmptySubsetError,
    ManifestError,
    MembershipError,
    SampleSizeError,
    ShapeError,
    StochasticityError,
)
from .evaluation import (
    EvalReport,
    StabilityStats,
    dbscan_cluster,
    fault_detection_rate,
    faults_revealed,
    selection_diversity,
    stability_stats,
    wilcoxon_signed_rank,
)
from .fitness import (
    FitnessPair,
    evaluate_fitness,
    gd_contribution,
    gini_score,
    log_geometric_diversity,
    normalize_features,
    subset_gini,
)
from .search import (
    Individual,
    NsgaSubsetSelector,
    ParetoArchive,
    SearchParams,
    crowding_distance,
    knee_point,
    non_dominated_sort,
    run_deepgd,
    select_deepgd,
    tournament_select,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
