"""Agglomerative cosine clustering with replayable merge history.

The linkage is the unweighted average of pairwise cosine distances
(``1 - cosine``) between cluster members. Merging is greedy on the
global minimum linkage; ties pick the lexicographically smallest pair of
cluster ids, where leaves are numbered 0..N-1 and the cluster created by
merge ``m`` gets id ``N + m``. The full dendrogram is always built, so
any cutoff can be applied afterwards without re-clustering.

The merge loop keeps a per-slot nearest-neighbor cache over a dense
distance matrix, giving O(N^2) memory and near-quadratic time; this
covers collections of roughly 20k items.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NormalizationError

_BLOCK_ROWS = 2048


def _thread_count(threads=None) -> int:
    if threads is None:
        env = os.environ.get("TPE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, threads)


def cosine_distance_matrix(features, threads=None) -> np.ndarray:
    """Dense ``1 - cosine`` matrix; rows are normalized first.

    Row blocks are dispatched to a small thread pool (capped by the
    ``TPE_THREADS`` environment variable); the result is independent of
    the thread count.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("features must be an (n_records, dim) matrix")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise NormalizationError("cannot take cosine distances of a zero vector")
    Xn = X / norms[:, None]
    n = Xn.shape[0]
    D = np.empty((n, n))
    blocks = range(0, n, _BLOCK_ROWS)

    def fill(start):
        stop = min(start + _BLOCK_ROWS, n)
        block = Xn[start:stop] @ Xn.T
        np.subtract(1.0, block, out=block)
        np.clip(block, 0.0, 2.0, out=block)
        D[start:stop] = block

    workers = _thread_count(threads)
    if workers == 1 or n <= _BLOCK_ROWS:
        for start in blocks:
            fill(start)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, blocks))
    return D


@dataclass(frozen=True)
class MergeHistory:
    """Full dendrogram: merged id pairs, linkage distances, new sizes."""

    n_leaves: int
    merges: np.ndarray  # (M, 2) cluster ids, smaller first
    dists: np.ndarray  # (M,) linkage distance of each merge
    sizes: np.ndarray  # (M,) size of the cluster each merge created

    def __len__(self) -> int:
        return self.merges.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster label per record (contiguous from 0) plus the history.

    ``retained`` is set by pruning and flags records whose cluster met
    the minimum size.
    """

    labels: np.ndarray
    n_clusters: int
    history: MergeHistory | None = None
    retained: np.ndarray | None = None

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def average_linkage(features, threads=None) -> MergeHistory:
    """Build the complete average-linkage dendrogram."""
    D = cosine_distance_matrix(features, threads=threads)
    n = D.shape[0]
    merges = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    dists = np.empty(max(n - 1, 0))
    sizes_out = np.empty(max(n - 1, 0), dtype=np.int64)
    if n == 1:
        return MergeHistory(1, merges, dists, sizes_out)

    np.fill_diagonal(D, np.inf)
    alive = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.int64)
    cluster_id = np.arange(n, dtype=np.int64)
    nn_dist = D.min(axis=1)
    nn_idx = D.argmin(axis=1)

    for m in range(n - 1):
        gmin = nn_dist[alive].min()
        rows = np.nonzero(alive & (nn_dist == gmin))[0]
        best = None  # (id_lo, id_hi, slot_a, slot_b)
        for i in rows:
            for j in np.nonzero(D[i] == gmin)[0]:
                ci, cj = cluster_id[i], cluster_id[j]
                pair = (ci, cj) if ci < cj else (cj, ci)
                if best is None or pair < best[:2]:
                    best = (*pair, min(i, j), max(i, j))
        id_lo, id_hi, a, b = best
        merges[m] = (id_lo, id_hi)
        dists[m] = gmin
        sizes_out[m] = size[a] + size[b]

        # Lance-Williams update for unweighted averages; dead slots stay
        # at +inf because inf averages to inf.
        sa, sb = size[a], size[b]
        row = (sa * D[a] + sb * D[b]) / (sa + sb)
        D[a] = row
        D[:, a] = row
        D[a, a] = np.inf
        D[b, :] = np.inf
        D[:, b] = np.inf
        alive[b] = False
        size[a] += sb
        cluster_id[a] = n + m
        nn_dist[b] = np.inf

        # Averaged distances never drop below a slot's cached minimum, so
        # only slots whose nearest neighbor was touched need a rescan.
        stale = alive & ((nn_idx == a) | (nn_idx == b))
        stale[a] = alive[a]
        for i in np.nonzero(stale)[0]:
            nn_dist[i] = D[i].min()
            nn_idx[i] = D[i].argmin()

    return MergeHistory(n, merges, dists, sizes_out)


def cut(history: MergeHistory, cutoff: float) -> np.ndarray:
    """Replay merges while their distance stays below the cutoff.

    Returns per-record labels, numbered contiguously in order of first
    appearance.
    """
    n = history.n_leaves
    parent = np.arange(n + len(history), dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for m in range(len(history)):
        if not history.dists[m] < cutoff:
            break
        new_id = n + m
        parent[find(history.merges[m, 0])] = new_id
        parent[find(history.merges[m, 1])] = new_id

    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for leaf in range(n):
        root = find(leaf)
        if root not in seen:
            seen[root] = len(seen)
        labels[leaf] = seen[root]
    return labels


def agglomerate(features, cutoff: float, threads=None) -> ClusterAssignment:
    """Cluster features at a cosine-distance cutoff in [0, 2]."""
    if not 0.0 <= cutoff <= 2.0:
        raise DataError(f"cutoff must be in [0, 2], got {cutoff}")
    history = average_linkage(features, threads=threads)
    labels = cut(history, cutoff)
    return ClusterAssignment(labels, int(labels.max()) + 1, history)


@dataclass(frozen=True)
class PairwiseScores:
    """Pair-counting precision/recall/F1 of a clustering against labels."""

    precision: float
    recall: float
    f1: float
    precision_defined: bool = True
    recall_defined: bool = True


def _pair_count(counts: np.ndarray) -> int:
    return int(np.sum(counts * (counts - 1) // 2))


def pairwise_metrics(assignment, labels) -> PairwiseScores:
    """Score same-cluster pairs against same-class pairs.

    A zero denominator yields a 0 score with the matching ``*_defined``
    flag cleared.
    """
    pred = assignment.labels if isinstance(assignment, ClusterAssignment) else assignment
    pred = np.asarray(pred)
    truth = np.asarray(labels)
    if pred.shape != truth.shape:
        raise DataError(
            f"assignment has {pred.shape[0]} records but {truth.shape[0]} labels given"
        )
    _, pred_codes = np.unique(pred, return_inverse=True)
    _, true_codes = np.unique(truth, return_inverse=True)
    same_cluster = _pair_count(np.bincount(pred_codes))
    same_class = _pair_count(np.bincount(true_codes))
    joint = np.unique(
        pred_codes.astype(np.int64) * (true_codes.max() + 1) + true_codes,
        return_counts=True,
    )[1]
    both = _pair_count(joint)

    precision = both / same_cluster if same_cluster > 0 else 0.0
    recall = both / same_class if same_class > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PairwiseScores(
        precision,
        recall,
        f1,
        precision_defined=same_cluster > 0,
        recall_defined=same_class > 0,
    )


def default_cutoff_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, 101)


def learn_cutoff(features, labels, grid=None, *, history=None) -> float:
    """Grid cutoff maximizing pairwise F1; ties take the smallest.

    Pass a prebuilt ``history`` to skip re-linking the same features.
    """
    if grid is None:
        grid = default_cutoff_grid()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise DataError("cutoff grid is empty")
    if history is None:
        history = average_linkage(features)
    best_cutoff = None
    best_f1 = -1.0
    for cutoff in grid:
        f1 = pairwise_metrics(cut(history, cutoff), labels).f1
        if f1 > best_f1:
            best_f1 = f1
            best_cutoff = float(cutoff)
    return best_cutoff


def pr_curve(features, labels, grid=None, *, history=None) -> np.ndarray:
    """(cutoff, precision, recall) rows over the cutoff grid."""
    if grid is None:
        grid = default_cutoff_grid()
    grid = np.asarray(grid, dtype=np.float64)
    if history is None:
        history = average_linkage(features)
    rows = np.empty((grid.size, 3))
    for i, cutoff in enumerate(grid):
        scores = pairwise_metrics(cut(history, cutoff), labels)
        rows[i] = (cutoff, scores.precision, scores.recall)
    return rows


def prune(assignment: ClusterAssignment, min_size: int = 3):
    """Drop small clusters from the reported count; flag their records.

    Returns the pruned cluster count and the assignment with a
    ``retained`` mask (labels unchanged).
    """
    sizes = assignment.cluster_sizes()
    keep = sizes >= min_size
    pruned_count = int(keep.sum())
    retained = keep[assignment.labels]
    return pruned_count, ClusterAssignment(
        assignment.labels, assignment.n_clusters, assignment.history, retained
    )


def kmeans(features, k: int, restarts: int = 1, seed: int = 0,
           max_iter: int = 300) -> ClusterAssignment:
    """Spherical k-means: max-cosine assignment, re-normalized centroids.

    Runs ``restarts`` seeded restarts and keeps the one with the lowest
    sum of squared chord distances (earliest restart on ties). Empty
    clusters are reseeded to the point farthest from its centroid.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise NormalizationError("k-means input contains a zero vector")
    Xn = X / norms[:, None]

    rng = np.random.default_rng(seed)
    best_cost = np.inf
    best_labels = None
    for _ in range(restarts):
        centroids = Xn[rng.choice(n, size=k, replace=False)].copy()
        labels = np.full(n, -1, dtype=np.int64)
        for _ in range(max_iter):
            sims = Xn @ centroids.T
            new_labels = np.argmax(sims, axis=1)
            new_labels = _fix_empty_clusters(Xn, sims, new_labels, centroids, k)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                members = Xn[labels == c]
                if members.size:
                    mean = members.mean(axis=0)
                    norm = np.linalg.norm(mean)
                    if norm > 0.0:
                        centroids[c] = mean / norm
        cost = float(np.sum(2.0 - 2.0 * np.take_along_axis(
            Xn @ centroids.T, labels[:, None], axis=1)))
        if cost < best_cost:
            best_cost = cost
            best_labels = labels
    # relabel contiguously in first-appearance order
    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for i, lab in enumerate(best_labels):
        lab = int(lab)
        if lab not in seen:
            seen[lab] = len(seen)
        labels[i] = seen[lab]
    return ClusterAssignment(labels, len(seen), None)


def _fix_empty_clusters(Xn, sims, labels, centroids, k):
    """Reseed empty clusters to the worst-assigned points, lowest c first."""
    labels = labels.copy()
    taken: set[int] = set()
    for c in range(k):
        if np.any(labels == c):
            continue
        assigned_sim = np.take_along_axis(sims, labels[:, None], axis=1).ravel()
        order = np.argsort(assigned_sim, kind="stable")
        pick = next(int(i) for i in order if int(i) not in taken)
        taken.add(pick)
        labels[pick] = c
        centroids[c] = Xn[pick]
    return labels
