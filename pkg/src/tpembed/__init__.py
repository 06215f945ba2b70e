"""Triplet probability embeddings with verification-style evaluation.

The package learns a low-dimensional linear projection of unit-norm
feature vectors from relative similarity triplets, scores pairs with
cosine similarity, and offers the usual verification/identification
metrics plus average-linkage cosine clustering.
"""

from .clustering import (
    ClusterAssignment,
    MergeHistory,
    PairwiseScores,
    agglomerate,
    average_linkage,
    cut,
    default_cutoff_grid,
    kmeans,
    learn_cutoff,
    pairwise_metrics,
    pr_curve,
    prune,
)
from .data import (
    Dataset,
    FeatureRecord,
    SynthConfig,
    generate_synthetic,
    load_manifest,
    normalize,
    save_binary,
    save_csv,
    split_half,
)
from .embedding import (
    EmbeddingMatrix,
    TrainConfig,
    TrainResult,
    Triplet,
    nll_loss,
    pca_init,
    project,
    sample_triplet,
    similarity,
    tde_gradient,
    tde_loss,
    tpe_gradient,
    train,
    train_tde,
    train_tpe,
    triplet_probability,
)
from .errors import (
    DataError,
    DegenerateDataError,
    DivergenceError,
    InsufficientDataError,
    ManifestError,
    NormalizationError,
    ProtocolError,
    TpembedError,
)
from .metrics import (
    FnmrAtFmr,
    IdentProtocol,
    RocCurve,
    ScoreSet,
    accuracy,
    auc,
    cmc,
    cosine,
    eer,
    fnmr_at_fmr,
    learn_accuracy_threshold,
    roc,
    score_pairs,
    tpir_at_fpir,
)
from .pooling import (
    Template,
    pool_average,
    pool_media,
    pool_templates,
    templates_from_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "TpembedError", "DataError", "NormalizationError", "ManifestError",
    "DegenerateDataError", "InsufficientDataError", "ProtocolError",
    "DivergenceError",
    # data
    "FeatureRecord", "Dataset", "SynthConfig", "normalize",
    "generate_synthetic", "split_half", "save_csv", "save_binary",
    "load_manifest",
    # embedding
    "EmbeddingMatrix", "Triplet", "TrainConfig", "TrainResult", "pca_init",
    "project", "similarity", "triplet_probability", "nll_loss",
    "tpe_gradient", "tde_loss", "tde_gradient", "sample_triplet",
    "train", "train_tpe", "train_tde",
    # pooling
    "Template", "templates_from_dataset", "pool_average", "pool_media",
    "pool_templates",
    # metrics
    "ScoreSet", "RocCurve", "FnmrAtFmr", "IdentProtocol", "cosine",
    "score_pairs", "roc", "eer", "auc", "fnmr_at_fmr", "cmc",
    "tpir_at_fpir", "learn_accuracy_threshold", "accuracy",
    # clustering
    "ClusterAssignment", "MergeHistory", "PairwiseScores", "average_linkage",
    "agglomerate", "cut", "pairwise_metrics", "learn_cutoff", "pr_curve",
    "prune", "kmeans", "default_cutoff_grid",
]
