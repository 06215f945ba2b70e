"""Learning the linear projection behind the low-dimensional embedding.

Two objectives over (anchor, positive, negative) triplets are supported:

* the probabilistic objective: the chance that a triplet orders the
  anchor-positive similarity above the anchor-negative one is modeled as
  a softmax over the two projected dot products, and the negative
  log-likelihood is minimized by SGD;
* a hinge baseline: squared projected distances must separate positive
  from negative by a margin ``alpha``.

The projection starts from the top principal directions of the training
features and is refined one triplet per step, with the negative picked
from a freshly sampled candidate pool as the one violating the ordering
hardest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import (
    DataError,
    DegenerateDataError,
    DivergenceError,
    InsufficientDataError,
)

MATRIX_MAGIC = b"TPEW"

TRAIN_LOG_COLUMNS = ("iter", "p", "loss")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """An n-by-N projection matrix."""

    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise DataError("embedding matrix must be 2-d")
        if W.shape[0] > W.shape[1]:
            raise DataError(
                f"output dimension {W.shape[0]} exceeds input dimension {W.shape[1]}"
            )
        if not np.all(np.isfinite(W)):
            raise DataError("embedding matrix has non-finite entries")
        W.flags.writeable = False
        object.__setattr__(self, "W", W)

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    def save(self, path) -> None:
        """Write the binary matrix format (float64 row-major)."""
        with open(path, "wb") as fh:
            fh.write(MATRIX_MAGIC)
            fh.write(struct.pack("<II", self.out_dim, self.in_dim))
            fh.write(np.ascontiguousarray(self.W, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 12 or blob[:4] != MATRIX_MAGIC:
            raise DataError(f"{path} is not a {MATRIX_MAGIC.decode()} matrix file")
        n, N = struct.unpack("<II", blob[4:12])
        expected = 12 + 8 * n * N
        if len(blob) != expected:
            raise DataError(
                f"{path}: expected {expected} bytes for shape ({n}, {N}), got {len(blob)}"
            )
        W = np.frombuffer(blob, dtype="<f8", offset=12).reshape(n, N)
        return cls(W)


@dataclass(frozen=True)
class Triplet:
    """Indices of (anchor, positive, negative) records in a dataset."""

    anchor: int
    positive: int
    negative: int

    def validate(self, dataset: Dataset) -> None:
        if self.anchor == self.positive:
            raise DataError("anchor and positive must be distinct records")
        records = dataset.records
        if records[self.anchor].subject != records[self.positive].subject:
            raise DataError("anchor and positive must share a subject")
        if records[self.anchor].subject == records[self.negative].subject:
            raise DataError("negative must come from a different subject")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the SGD training loop.

    ``decay_factor``/``decay_every`` optionally shrink the learning rate
    by the factor every ``decay_every`` iterations.
    """

    dim: int = 128
    learning_rate: float = 0.01
    iterations: int = 10000
    pool_size: int = 2000
    seed: int = 0
    method: str = "tpe"
    margin: float = 0.2
    decay_factor: float | None = None
    decay_every: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.method not in ("tpe", "tde"):
            raise ValueError("method must be 'tpe' or 'tde'")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if (self.decay_factor is None) != (self.decay_every is None):
            raise ValueError("decay_factor and decay_every must be set together")
        if self.decay_factor is not None and self.decay_factor <= 0:
            raise ValueError("decay_factor must be > 0")
        if self.decay_every is not None and self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    matrix: EmbeddingMatrix
    log: np.ndarray  # columns: iter, p, loss


def _as_features(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.features
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("expected a dataset or an (n_records, dim) matrix")
    return X


def pca_init(data, n: int) -> EmbeddingMatrix:
    """Top-n principal directions of the mean-centered features.

    Rows are unit-norm, mutually orthogonal, ordered by descending
    explained variance, and sign-fixed so each row's largest-magnitude
    entry is positive.
    """
    X = _as_features(data)
    m, N = X.shape
    if n < 1 or n > N:
        raise DataError(f"n must be in [1, {N}], got {n}")
    if m < n:
        raise DataError(f"need at least {n} records for a rank-{n} basis, got {m}")
    centered = X - X.mean(axis=0)
    # SVD of the centered data; right singular vectors are the principal
    # directions and singular values give the rank.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(m, N) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if n > rank:
        raise DegenerateDataError(
            f"requested {n} components but data covariance has rank {rank}"
        )
    W = vt[:n].copy()
    for row in W:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return EmbeddingMatrix(W)


def project(W, vectors) -> np.ndarray:
    """Apply the projection to one vector or a stack of row vectors."""
    W = _matrix_of(W)
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != W.shape[1]:
        raise DataError(
            f"vector dimension {v.shape[-1]} does not match matrix input "
            f"dimension {W.shape[1]}"
        )
    return v @ W.T


def similarity(W, v_i, v_j) -> float:
    """Projected dot product of two vectors."""
    W = _matrix_of(W)
    return float(np.dot(project(W, v_i), project(W, v_j)))


def _matrix_of(W) -> np.ndarray:
    if isinstance(W, EmbeddingMatrix):
        return W.W
    return np.asarray(W, dtype=np.float64)


def _sigmoid(x: float) -> float:
    # Stable in both tails.
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def triplet_probability(W, t: Triplet, dataset: Dataset) -> float:
    """Probability that the triplet's ordering constraint holds.

    Softmax over the two projected similarities, evaluated as a sigmoid
    of their difference so it is stable for any finite scores.
    """
    W = _matrix_of(W)
    X = dataset.features
    u_a = X[t.anchor] @ W.T
    s_pos = float(u_a @ (W @ X[t.positive]))
    s_neg = float(u_a @ (W @ X[t.negative]))
    return _sigmoid(s_pos - s_neg)


def nll_loss(W, triplets, dataset: Dataset) -> float:
    """Summed negative log-probability over a list of triplets."""
    triplets = list(triplets)
    if not triplets:
        raise DataError("nll_loss needs at least one triplet")
    total = 0.0
    for t in triplets:
        total += -np.log(triplet_probability(W, t, dataset))
    return float(total)


def tpe_gradient(W, t: Triplet, dataset: Dataset) -> np.ndarray:
    """Gradient of the triplet's negative log-probability w.r.t. W.

    Equals -(1 - p) * W (v_a d^T + d v_a^T) with d the positive-minus-
    negative difference; stepping against it is the descent direction.
    """
    W = _matrix_of(W)
    X = dataset.features
    v_a = X[t.anchor]
    d = X[t.positive] - X[t.negative]
    p = triplet_probability(W, t, dataset)
    u_a = W @ v_a
    u_d = W @ d
    return -(1.0 - p) * (np.outer(u_a, d) + np.outer(u_d, v_a))


def tde_loss(W, t: Triplet, alpha: float, dataset: Dataset) -> float:
    """Hinge loss on squared projected distances with margin alpha."""
    W = _matrix_of(W)
    X = dataset.features
    d_pos = W @ (X[t.anchor] - X[t.positive])
    d_neg = W @ (X[t.anchor] - X[t.negative])
    return float(max(0.0, alpha + d_pos @ d_pos - d_neg @ d_neg))


def tde_gradient(W, t: Triplet, alpha: float, dataset: Dataset) -> np.ndarray:
    """Subgradient of the hinge loss; zero when inactive or exactly at
    the margin."""
    W = _matrix_of(W)
    X = dataset.features
    u = X[t.anchor] - X[t.positive]
    w = X[t.anchor] - X[t.negative]
    Wu = W @ u
    Ww = W @ w
    if alpha + Wu @ Wu - Ww @ Ww <= 0.0:
        return np.zeros_like(W)
    return 2.0 * (np.outer(Wu, u) - np.outer(Ww, w))


class _TripletSampler:
    """Precomputed index structures for online triplet sampling.

    Anchors are drawn uniformly over records whose subject has at least
    two records; the positive uniformly over the anchor's other records;
    the negative from ``pool_size`` other-subject records drawn uniformly
    with replacement, keeping the hardest one (ties to the lowest record
    index).
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        n = len(dataset)
        self.eligible = []
        self.same: dict[int, np.ndarray] = {}
        self.others: dict[str, np.ndarray] = {}
        all_idx = np.arange(n)
        subjects = np.array(dataset.subjects)
        for subject, indices in dataset.subject_index.items():
            if len(indices) >= 2:
                self.eligible.extend(indices)
                for i in indices:
                    self.same[i] = np.array([j for j in indices if j != i])
        if not self.eligible:
            raise InsufficientDataError(
                "triplet sampling needs a subject with at least 2 records"
            )
        if len(dataset.subject_index) < 2:
            raise InsufficientDataError("triplet sampling needs at least 2 subjects")
        for subject in dataset.subject_index:
            self.others[subject] = all_idx[subjects != subject]
        self.eligible = np.array(sorted(self.eligible))

    def draw_pair(self, rng) -> tuple[int, int]:
        anchor = int(self.eligible[rng.integers(len(self.eligible))])
        same = self.same[anchor]
        positive = int(same[rng.integers(len(same))])
        return anchor, positive

    def draw_pool(self, anchor: int, pool_size: int, rng) -> np.ndarray:
        others = self.others[self.dataset.records[anchor].subject]
        return others[rng.integers(0, len(others), size=pool_size)]

    def sample_tpe(self, W: np.ndarray, pool_size: int, rng) -> Triplet:
        anchor, positive = self.draw_pair(rng)
        pool = self.draw_pool(anchor, pool_size, rng)
        X = self.dataset.features
        # Least triplet probability <=> largest anchor-negative score.
        with np.errstate(over="ignore", invalid="ignore"):
            y = W.T @ (W @ X[anchor])
            scores = X[pool] @ y
        best = scores.max()
        if not np.isfinite(best):
            raise DivergenceError("similarity scores overflowed during negative mining")
        negative = int(pool[scores == best].min())
        return Triplet(anchor, positive, negative)

    def sample_tde(self, W: np.ndarray, pool_size: int, rng) -> Triplet:
        anchor, positive = self.draw_pair(rng)
        pool = self.draw_pool(anchor, pool_size, rng)
        X = self.dataset.features
        # Largest margin violation <=> smallest squared distance to anchor.
        with np.errstate(over="ignore", invalid="ignore"):
            u_a = W @ X[anchor]
            P = X[pool] @ W.T
            dists = np.sum(P * P, axis=1) - 2.0 * (P @ u_a)
        worst = dists.min()
        if not np.isfinite(worst):
            raise DivergenceError("projected distances overflowed during negative mining")
        negative = int(pool[dists == worst].min())
        return Triplet(anchor, positive, negative)


def sample_triplet(dataset: Dataset, W, pool_size: int, rng) -> Triplet:
    """Draw one hard-negative triplet (probabilistic hardness)."""
    return _TripletSampler(dataset).sample_tpe(_matrix_of(W), pool_size, rng)


def _train(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    W0 = pca_init(dataset, cfg.dim)
    W = W0.W.copy()
    sampler = _TripletSampler(dataset)
    rng = np.random.default_rng(cfg.seed)
    X = dataset.features
    eta = cfg.learning_rate
    log = np.empty((cfg.iterations, 3))

    for it in range(cfg.iterations):
        if cfg.decay_every is not None and it > 0 and it % cfg.decay_every == 0:
            eta *= cfg.decay_factor
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                if cfg.method == "tpe":
                    t = sampler.sample_tpe(W, cfg.pool_size, rng)
                    v_a = X[t.anchor]
                    d = X[t.positive] - X[t.negative]
                    u_a = W @ v_a
                    s_pos = float(u_a @ (W @ X[t.positive]))
                    s_neg = float(u_a @ (W @ X[t.negative]))
                    p = _sigmoid(s_pos - s_neg)
                    coeff = eta * (1.0 - p)
                    W += coeff * (np.outer(u_a, d) + np.outer(W @ d, v_a))
                    loss = -np.log(p)
                else:
                    t = sampler.sample_tde(W, cfg.pool_size, rng)
                    u = X[t.anchor] - X[t.positive]
                    w = X[t.anchor] - X[t.negative]
                    Wu = W @ u
                    Ww = W @ w
                    violation = cfg.margin + Wu @ Wu - Ww @ Ww
                    u_a = W @ X[t.anchor]
                    p = _sigmoid(
                        float(u_a @ (W @ X[t.positive]) - u_a @ (W @ X[t.negative]))
                    )
                    loss = max(0.0, float(violation))
                    if violation > 0.0:
                        W -= eta * 2.0 * (np.outer(Wu, u) - np.outer(Ww, w))
        except DivergenceError as exc:
            raise DivergenceError(str(exc), iteration=it) from None
        if not np.all(np.isfinite(W)):
            raise DivergenceError(
                f"non-finite projection entries at iteration {it}", iteration=it
            )
        log[it] = (it, p, loss)

    return TrainResult(EmbeddingMatrix(W), log)


def train_tpe(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """SGD on the triplet NLL, one online-sampled triplet per step."""
    if cfg.method != "tpe":
        raise ValueError("train_tpe requires cfg.method 'tpe'")
    return _train(dataset, cfg)


def train_tde(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """SGD on the hinge baseline, mirroring the probabilistic loop."""
    if cfg.method != "tde":
        raise ValueError("train_tde requires cfg.method 'tde'")
    return _train(dataset, cfg)


def train(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    return _train(dataset, cfg)
