"""Verification and identification metrics over cosine similarity scores.

All curve computations are exact empirical sweeps over the observed
score values, with conventions pinned so results are bit-reproducible:

* a comparison counts as a match when ``score >= threshold``;
* the false-match rate at a threshold is the fraction of impostor scores
  at or above it, the false-non-match rate the fraction of genuine
  scores below it;
* interpolation between operating points is linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NormalizationError, ProtocolError


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ProtocolError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise NormalizationError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class ScoreSet:
    """Labeled comparison scores; True marks a genuine comparison."""

    scores: np.ndarray
    genuine: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        genuine = np.asarray(self.genuine, dtype=bool)
        if scores.shape != genuine.shape or scores.ndim != 1:
            raise ProtocolError("scores and labels must be 1-d and equal length")
        if not np.all(np.isfinite(scores)):
            raise ProtocolError("scores must be finite")
        scores.flags.writeable = False
        genuine.flags.writeable = False
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "genuine", genuine)

    @property
    def genuine_scores(self) -> np.ndarray:
        return self.scores[self.genuine]

    @property
    def impostor_scores(self) -> np.ndarray:
        return self.scores[~self.genuine]

    def require_both_classes(self):
        if self.genuine_scores.size == 0:
            raise ProtocolError("score set has no genuine scores")
        if self.impostor_scores.size == 0:
            raise ProtocolError("score set has no impostor scores")


def score_pairs(representations: dict, pairs) -> ScoreSet:
    """Cosine-score a pair protocol against a representation lookup.

    ``pairs`` yields (id_a, id_b, is_genuine) entries.
    """
    scores = []
    labels = []
    for id_a, id_b, is_genuine in pairs:
        for rid in (id_a, id_b):
            if rid not in representations:
                raise ProtocolError(f"pair references unknown id {rid!r}")
        scores.append(cosine(representations[id_a], representations[id_b]))
        labels.append(bool(is_genuine))
    return ScoreSet(np.array(scores), np.array(labels))


@dataclass(frozen=True)
class RocCurve:
    """Operating points (threshold, fmr, fnmr), thresholds ascending.

    The first point has threshold -inf (everything matches, fmr 1) and
    the last +inf (nothing matches, fmr 0).
    """

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray

    def __post_init__(self):
        for name in ("thresholds", "fmr", "fnmr"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.thresholds.shape == self.fmr.shape == self.fnmr.shape):
            raise ProtocolError("curve arrays must have equal length")
        if np.any(np.diff(self.fmr) > 0) or np.any(np.diff(self.fnmr) < 0):
            raise ProtocolError("fmr must be nonincreasing and fnmr nondecreasing")

    @property
    def tar(self) -> np.ndarray:
        return 1.0 - self.fnmr


def roc(scores: ScoreSet) -> RocCurve:
    """Exact empirical curve over all distinct score thresholds."""
    scores.require_both_classes()
    gen = np.sort(scores.genuine_scores)
    imp = np.sort(scores.impostor_scores)
    thresholds = np.concatenate(([-np.inf], np.unique(scores.scores), [np.inf]))
    # score >= threshold counts as a match
    fmr = (imp.size - np.searchsorted(imp, thresholds, side="left")) / imp.size
    fnmr = np.searchsorted(gen, thresholds, side="left") / gen.size
    return RocCurve(thresholds, fmr, fnmr)


def eer(curve: RocCurve) -> float:
    """Rate where the interpolated FMR and FNMR curves cross."""
    diff = curve.fmr - curve.fnmr  # nonincreasing, from 1 to -1
    exact = np.nonzero(diff == 0.0)[0]
    if exact.size:
        return float(curve.fmr[exact[0]])
    i = int(np.nonzero(diff > 0)[0][-1])
    t = diff[i] / (diff[i] - diff[i + 1])
    return float(curve.fmr[i] + t * (curve.fmr[i + 1] - curve.fmr[i]))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under TAR versus FMR.

    The curve is traversed in descending threshold order so that FMR is
    non-decreasing and tied FMR levels keep their staircase ordering.
    """
    return float(np.trapezoid(curve.tar[::-1], curve.fmr[::-1]))


class FnmrAtFmr(NamedTuple):
    fnmr: float
    achieved_fmr: float


def fnmr_at_fmr(curve: RocCurve, fmr: float) -> FnmrAtFmr:
    """FNMR interpolated at the requested FMR.

    Uses the curve's lower envelope (best FNMR at each distinct FMR
    level) and also reports the achieved FMR of the nearest actual
    operating point.
    """
    if not 0.0 < fmr <= 1.0:
        raise ProtocolError(f"fmr target must be in (0, 1], got {fmr}")
    levels, inverse = np.unique(curve.fmr, return_inverse=True)
    envelope = np.full(levels.shape, np.inf)
    np.minimum.at(envelope, inverse, curve.fnmr)
    value = float(np.interp(fmr, levels, envelope))
    nearest = int(np.argmin(np.abs(curve.fmr - fmr)))
    return FnmrAtFmr(value, float(curve.fmr[nearest]))


@dataclass(frozen=True)
class IdentProtocol:
    """Gallery of one representation per subject plus labeled probes.

    ``probes`` holds (vector, subject) entries; subject None marks a
    probe with no gallery mate. Gallery insertion order breaks score
    ties deterministically.
    """

    gallery: dict
    probes: list

    def __post_init__(self):
        if not self.gallery:
            raise ProtocolError("gallery is empty")
        if not self.probes:
            raise ProtocolError("no probes given")

    def score_matrix(self) -> tuple[np.ndarray, list]:
        """(n_probes, n_gallery) cosine scores and the subject order."""
        subjects = list(self.gallery)
        gal = np.stack([np.asarray(self.gallery[s], dtype=np.float64) for s in subjects])
        norms = np.linalg.norm(gal, axis=1)
        if np.any(norms == 0.0):
            raise NormalizationError("gallery contains a zero vector")
        gal = gal / norms[:, None]
        probe_vecs = np.stack([np.asarray(v, dtype=np.float64) for v, _ in self.probes])
        pnorms = np.linalg.norm(probe_vecs, axis=1)
        if np.any(pnorms == 0.0):
            raise NormalizationError("probe set contains a zero vector")
        probe_vecs = probe_vecs / pnorms[:, None]
        return np.clip(probe_vecs @ gal.T, -1.0, 1.0), subjects


def _probe_ranks(protocol: IdentProtocol):
    """Per-mated-probe (rank of true subject, top score, rank-1 hit)."""
    scores, subjects = protocol.score_matrix()
    position = {s: i for i, s in enumerate(subjects)}
    ranks = []
    for row, (_, subject) in zip(scores, protocol.probes):
        order = np.argsort(-row, kind="stable")
        rank = int(np.nonzero(order == position[subject])[0][0]) + 1
        ranks.append((rank, float(row.max())))
    return ranks


def cmc(protocol: IdentProtocol, ranks) -> list[float]:
    """Fraction of probes whose mate appears within each rank."""
    for _, subject in protocol.probes:
        if subject is None or subject not in protocol.gallery:
            raise ProtocolError("closed-set protocol contains an unmated probe")
    probe_ranks = _probe_ranks(protocol)
    out = []
    for r in ranks:
        if r < 1:
            raise ProtocolError(f"rank must be >= 1, got {r}")
        out.append(sum(rank <= r for rank, _ in probe_ranks) / len(probe_ranks))
    return out


def tpir_at_fpir(protocol: IdentProtocol, fpir_targets) -> list[float]:
    """Open-set identification rates at target false-positive rates.

    The threshold is the linearly interpolated quantile of unmated
    probes' top scores at survival level fpir; TPIR counts mated probes
    ranked first at or above it.
    """
    mated = []
    unmated_top = []
    scores, subjects = protocol.score_matrix()
    position = {s: i for i, s in enumerate(subjects)}
    for row, (_, subject) in zip(scores, protocol.probes):
        if subject is None or subject not in protocol.gallery:
            unmated_top.append(float(row.max()))
        else:
            top_idx = int(np.argmax(row))
            mated.append((subjects[top_idx] == subject, float(row.max())))
    if not unmated_top:
        raise ProtocolError("open-set metrics need at least one unmated probe")
    if not mated:
        raise ProtocolError("open-set metrics need at least one mated probe")
    unmated_top = np.array(unmated_top)
    out = []
    for target in fpir_targets:
        if not 0.0 < target <= 1.0:
            raise ProtocolError(f"fpir target must be in (0, 1], got {target}")
        threshold = float(np.quantile(unmated_top, 1.0 - target, method="linear"))
        hits = sum(1 for correct, top in mated if correct and top >= threshold)
        out.append(hits / len(mated))
    return out


def learn_accuracy_threshold(train: ScoreSet) -> float:
    """Threshold maximizing classification accuracy on the training set.

    Candidates are the midpoints of adjacent distinct scores plus both
    infinities; ties resolve to the lowest threshold.
    """
    train.require_both_classes()
    uniq = np.unique(train.scores)
    candidates = np.concatenate(([-np.inf], (uniq[:-1] + uniq[1:]) / 2.0, [np.inf]))
    gen = np.sort(train.genuine_scores)
    imp = np.sort(train.impostor_scores)
    correct_gen = gen.size - np.searchsorted(gen, candidates, side="left")
    correct_imp = np.searchsorted(imp, candidates, side="left")
    accuracy_by_threshold = (correct_gen + correct_imp) / train.scores.size
    return float(candidates[np.argmax(accuracy_by_threshold)])


def accuracy(test: ScoreSet, threshold: float) -> float:
    """Fraction of scores classified correctly by the threshold."""
    predicted_genuine = test.scores >= threshold
    return float(np.mean(predicted_genuine == test.genuine))
