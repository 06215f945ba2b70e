"""End-to-end synthetic benchmarks behind the repro subcommands.

Both pipelines stand in for the paper-style experiments at desk scale:
verification compares raw cosine scoring against the two learned
projections on a held-out half, and clustering compares pooled template
representations (average vs per-media pooling, raw vs projected) with
cutoffs learned on disjoint training subjects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    average_linkage,
    cut,
    default_cutoff_grid,
    learn_cutoff,
    pairwise_metrics,
    pr_curve,
)
from .data import Dataset, SynthConfig, generate_synthetic, split_half
from .embedding import EmbeddingMatrix, TrainConfig, project, train_tde, train_tpe
from .metrics import RocCurve, ScoreSet, auc, eer, roc
from .pooling import pool_templates, templates_from_dataset


def all_pairs_scores(features, subjects) -> ScoreSet:
    """Cosine-score every unordered record pair; same subject = genuine."""
    X = np.asarray(features, dtype=np.float64)
    Xn = X / np.linalg.norm(X, axis=1, keepdims=True)
    gram = np.clip(Xn @ Xn.T, -1.0, 1.0)
    i, j = np.triu_indices(X.shape[0], k=1)
    subjects = np.asarray(subjects)
    return ScoreSet(gram[i, j], subjects[i] == subjects[j])


@dataclass(frozen=True)
class VerificationSpec:
    """Configuration of the raw-vs-TDE-vs-TPE verification benchmark."""

    subjects: int = 50
    per: int = 20
    dim: int = 64
    embed_dim: int = 16
    iterations: int = 20000
    learning_rate: float = 0.01
    pool_size: int = 2000
    sigma: float = 0.3
    signal_dim: int | None = 16
    margin: float = 0.2
    seed: int = 7


@dataclass(frozen=True)
class VerificationReport:
    curves: dict[str, RocCurve]
    eer: dict[str, float]
    auc: dict[str, float]
    matrices: dict[str, EmbeddingMatrix]


def run_verification(spec: VerificationSpec) -> VerificationReport:
    """Train both embeddings on one half, score all pairs on the other."""
    data = generate_synthetic(
        SynthConfig(
            num_subjects=spec.subjects,
            records_per_subject=spec.per,
            dim=spec.dim,
            within_class_sigma=spec.sigma,
            signal_dim=spec.signal_dim,
            seed=spec.seed,
        )
    )
    train_set, test_set = split_half(data)

    def cfg(method):
        return TrainConfig(
            dim=spec.embed_dim,
            learning_rate=spec.learning_rate,
            iterations=spec.iterations,
            pool_size=spec.pool_size,
            seed=spec.seed,
            method=method,
            margin=spec.margin,
        )

    w_tpe = train_tpe(train_set, cfg("tpe")).matrix
    w_tde = train_tde(train_set, cfg("tde")).matrix

    scored = {
        "raw": all_pairs_scores(test_set.features, test_set.subjects),
        "tde": all_pairs_scores(project(w_tde, test_set.features), test_set.subjects),
        "tpe": all_pairs_scores(project(w_tpe, test_set.features), test_set.subjects),
    }
    curves = {name: roc(s) for name, s in scored.items()}
    return VerificationReport(
        curves=curves,
        eer={name: eer(c) for name, c in curves.items()},
        auc={name: auc(c) for name, c in curves.items()},
        matrices={"tpe": w_tpe, "tde": w_tde},
    )


@dataclass(frozen=True)
class ClusteringSpec:
    """Configuration of the pooled-template clustering benchmark.

    Subjects are split three ways disjointly: the projection is learned
    on raw training records, cutoffs on pooled validation templates
    (so the distance scale matches unseen subjects), and scores are
    reported on pooled test templates.
    """

    train_subjects: int = 50
    val_subjects: int = 10
    test_subjects: int = 30
    per: int = 30
    dim: int = 64
    embed_dim: int = 24
    media: int = 2
    sigma: float = 0.25
    media_sigma: float = 1.5
    templates: int = 10
    signal_dim: int | None = 8
    iterations: int = 12000
    learning_rate: float = 0.01
    decay_factor: float | None = 0.5
    decay_every: int | None = 3000
    pool_size: int = 2000
    margin: float = 0.2
    seed: int = 7
    grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_cutoff_grid()))


# (pooling mode, projected?) cells evaluated by the clustering benchmark
CLUSTER_CELLS = ("raw_average", "raw_media", "tpe_average", "tpe_media")


@dataclass(frozen=True)
class ClusteringReport:
    f1: dict[str, float]
    precision: dict[str, float]
    recall: dict[str, float]
    cutoffs: dict[str, float]
    pr: dict[str, np.ndarray]
    n_templates: int
    matrix: EmbeddingMatrix


def _subject_subset(data: Dataset, subjects) -> Dataset:
    wanted = set(subjects)
    return data.subset(
        [i for i, rec in enumerate(data.records) if rec.subject in wanted]
    )


def run_clustering(spec: ClusteringSpec) -> ClusteringReport:
    """Cluster pooled test templates under four representations.

    Pooling runs in the raw feature space; the learned projection is
    applied to the pooled vectors afterwards.
    """
    data = generate_synthetic(
        SynthConfig(
            num_subjects=spec.train_subjects + spec.val_subjects + spec.test_subjects,
            records_per_subject=spec.per,
            dim=spec.dim,
            within_class_sigma=spec.sigma,
            media_per_subject=spec.media,
            media_offset_sigma=spec.media_sigma,
            templates_per_subject=spec.templates,
            signal_dim=spec.signal_dim,
            seed=spec.seed,
        )
    )
    order = list(data.subject_index)
    n_fit = spec.train_subjects
    n_val = n_fit + spec.val_subjects
    train_set = _subject_subset(data, order[:n_fit])
    val_set = _subject_subset(data, order[n_fit:n_val])
    test_set = _subject_subset(data, order[n_val:])

    w = train_tpe(
        train_set,
        TrainConfig(
            dim=spec.embed_dim,
            learning_rate=spec.learning_rate,
            iterations=spec.iterations,
            pool_size=spec.pool_size,
            seed=spec.seed,
            method="tpe",
            margin=spec.margin,
            decay_factor=spec.decay_factor,
            decay_every=spec.decay_every,
        ),
    ).matrix

    grid = np.asarray(spec.grid, dtype=np.float64)
    f1, precision, recall, cutoffs, pr = {}, {}, {}, {}, {}
    n_templates = 0
    for mode in ("average", "media"):
        val_pooled = pool_templates(templates_from_dataset(val_set), mode)
        test_pooled = pool_templates(templates_from_dataset(test_set), mode)
        n_templates = len(test_pooled)
        for rep in ("raw", "tpe"):
            cell = f"{rep}_{mode}"
            if rep == "raw":
                val_feats = val_pooled.features
                test_feats = test_pooled.features
            else:
                val_feats = project(w, val_pooled.features)
                test_feats = project(w, test_pooled.features)
            cutoff = learn_cutoff(None, val_pooled.subjects, grid,
                                  history=average_linkage(val_feats))
            test_history = average_linkage(test_feats)
            scores = pairwise_metrics(cut(test_history, cutoff), test_pooled.subjects)
            cutoffs[cell] = cutoff
            f1[cell] = scores.f1
            precision[cell] = scores.precision
            recall[cell] = scores.recall
            pr[cell] = pr_curve(None, test_pooled.subjects, grid, history=test_history)

    return ClusteringReport(
        f1=f1,
        precision=precision,
        recall=recall,
        cutoffs=cutoffs,
        pr=pr,
        n_templates=n_templates,
        matrix=w,
    )
