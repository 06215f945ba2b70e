"""Feature records, file formats, and the synthetic feature generator.

A dataset is an ordered list of labeled feature vectors of one common
dimension. Two on-disk formats are supported:

* inline CSV with header ``record_id,subject,media_id,template_id,split,
  f0,...,f{N-1}``;
* a binary sidecar (magic ``TPE1``, little-endian u32 count and dim,
  then ``count * dim`` little-endian float32 values) paired with a
  companion CSV manifest that replaces the ``f*`` columns with a single
  ``row`` column indexing into the sidecar. By default the sidecar is
  looked up next to the manifest with a ``.bin`` suffix.

Vectors are L2-normalized on load unless the caller disables it.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ManifestError, NormalizationError

BINARY_MAGIC = b"TPE1"

_LABEL_COLUMNS = ["record_id", "subject", "media_id", "template_id", "split"]
_SPLITS = ("train", "test")


def normalize(v: np.ndarray) -> np.ndarray:
    """Return ``v`` scaled to unit L2 norm.

    Raises NormalizationError for zero vectors or non-finite entries.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NormalizationError("vector has non-finite entries")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NormalizationError("cannot normalize a zero vector")
    return v / norm


@dataclass(frozen=True)
class FeatureRecord:
    """One labeled feature vector."""

    record_id: str
    subject: str
    media_id: str
    values: np.ndarray
    template_id: str | None = None
    split: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DataError(f"record {self.record_id!r}: values must be a vector")
        if not np.all(np.isfinite(values)):
            raise DataError(f"record {self.record_id!r}: non-finite feature values")
        if self.split is not None and self.split not in _SPLITS:
            raise DataError(
                f"record {self.record_id!r}: split must be one of {_SPLITS}, "
                f"got {self.split!r}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


class Dataset:
    """Ordered collection of FeatureRecords with label indexes.

    ``features`` stacks all vectors into an (n_records, dim) float64
    matrix; ``subject_index`` and ``template_index`` map labels to lists
    of record positions, in record order.
    """

    def __init__(self, records: list[FeatureRecord]):
        if not records:
            raise DataError("dataset must contain at least one record")
        dim = records[0].dim
        seen: set[str] = set()
        subject_index: dict[str, list[int]] = {}
        template_index: dict[str, list[int]] = {}
        for i, rec in enumerate(records):
            if rec.dim != dim:
                raise DataError(
                    f"record {rec.record_id!r} has dimension {rec.dim}, expected {dim}"
                )
            if rec.record_id in seen:
                raise DataError(f"duplicate record_id {rec.record_id!r}")
            seen.add(rec.record_id)
            subject_index.setdefault(rec.subject, []).append(i)
            if rec.template_id is not None:
                template_index.setdefault(rec.template_id, []).append(i)
        self.records = list(records)
        self.dim = dim
        self.subject_index = subject_index
        self.template_index = template_index
        features = np.stack([rec.values for rec in records])
        features.flags.writeable = False
        self.features = features
        self.subjects = [rec.subject for rec in records]

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.records[i] for i in indices])

    def filter_split(self, split: str) -> "Dataset":
        return self.subset([i for i, r in enumerate(self.records) if r.split == split])

    def normalized(self) -> "Dataset":
        return Dataset(
            [
                FeatureRecord(
                    r.record_id, r.subject, r.media_id, normalize(r.values),
                    r.template_id, r.split,
                )
                for r in self.records
            ]
        )


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic unit-sphere feature generator.

    Subject means are drawn uniformly on the sphere; each record adds
    isotropic within-class noise plus an offset shared by all records of
    the same (subject, media) pair, then is re-normalized. Media ids are
    assigned round-robin over ``media_per_subject``; when
    ``templates_per_subject`` is set, records are grouped into that many
    contiguous-block templates per subject.

    ``signal_dim`` confines the subject means to the subspace of the
    first ``signal_dim`` coordinates while noise and media offsets stay
    full-dimensional, mimicking deep features whose identity signal
    occupies a low-dimensional subspace. Unset means full-dimensional
    means.
    """

    num_subjects: int
    records_per_subject: int
    dim: int
    within_class_sigma: float = 0.0
    media_per_subject: int = 1
    media_offset_sigma: float = 0.0
    templates_per_subject: int = 0
    signal_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_subjects < 1 or self.records_per_subject < 1:
            raise ValueError("counts must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.media_per_subject < 1:
            raise ValueError("media_per_subject must be >= 1")
        if self.within_class_sigma < 0 or self.media_offset_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if self.templates_per_subject < 0 or self.templates_per_subject > self.records_per_subject:
            raise ValueError("templates_per_subject must be in [0, records_per_subject]")
        if self.signal_dim is not None and not 1 <= self.signal_dim <= self.dim:
            raise ValueError("signal_dim must be in [1, dim]")


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Generate a labeled synthetic dataset, deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.signal_dim if cfg.signal_dim is not None else cfg.dim
    means = np.zeros((cfg.num_subjects, cfg.dim))
    means[:, :k] = rng.standard_normal((cfg.num_subjects, k))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    media_offsets = cfg.media_offset_sigma * rng.standard_normal(
        (cfg.num_subjects, cfg.media_per_subject, cfg.dim)
    )
    noise = cfg.within_class_sigma * rng.standard_normal(
        (cfg.num_subjects, cfg.records_per_subject, cfg.dim)
    )

    records = []
    n_templates = cfg.templates_per_subject
    for s in range(cfg.num_subjects):
        subject = f"s{s:04d}"
        for r in range(cfg.records_per_subject):
            media = r % cfg.media_per_subject
            template_id = None
            if n_templates:
                t = r * n_templates // cfg.records_per_subject
                template_id = f"{subject}_t{t:02d}"
            values = normalize(means[s] + noise[s, r] + media_offsets[s, media])
            records.append(
                FeatureRecord(
                    record_id=f"{subject}_r{r:04d}",
                    subject=subject,
                    media_id=f"{subject}_m{media:02d}",
                    values=values,
                    template_id=template_id,
                )
            )
    return Dataset(records)


def split_half(dataset: Dataset) -> tuple[Dataset, Dataset]:
    """Split each subject's records in listed order: first half / rest."""
    train_idx: list[int] = []
    test_idx: list[int] = []
    for subject in dataset.subject_index:
        indices = dataset.subject_index[subject]
        half = len(indices) // 2
        train_idx.extend(indices[:half])
        test_idx.extend(indices[half:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def _format_float(x: float) -> str:
    return repr(float(x))


def save_csv(dataset: Dataset, path) -> None:
    """Write the inline CSV format (full float precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LABEL_COLUMNS + [f"f{i}" for i in range(dataset.dim)])
        for rec in dataset.records:
            writer.writerow(
                [
                    rec.record_id,
                    rec.subject,
                    rec.media_id,
                    rec.template_id or "",
                    rec.split or "",
                ]
                + [_format_float(x) for x in rec.values]
            )


def save_binary(dataset: Dataset, path, manifest_path=None) -> None:
    """Write the binary sidecar plus its companion CSV manifest.

    Values are stored as little-endian float32. The manifest defaults to
    the sidecar path with a ``.csv`` suffix.
    """
    path = str(path)
    if manifest_path is None:
        manifest_path = _sibling(path, ".csv")
    values = np.ascontiguousarray(dataset.features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", len(dataset), dataset.dim))
        fh.write(values.tobytes())
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LABEL_COLUMNS + ["row"])
        for i, rec in enumerate(dataset.records):
            writer.writerow(
                [
                    rec.record_id,
                    rec.subject,
                    rec.media_id,
                    rec.template_id or "",
                    rec.split or "",
                    str(i),
                ]
            )


def _sibling(path: str, suffix: str) -> str:
    stem = path[: path.rfind(".")] if "." in path.split("/")[-1] else path
    return stem + suffix


def _read_binary_features(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read feature sidecar {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != BINARY_MAGIC:
        raise ManifestError(f"{path} is not a {BINARY_MAGIC.decode()} feature file")
    count, dim = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * count * dim
    if len(blob) != expected:
        raise ManifestError(
            f"{path}: expected {expected} bytes for count={count} dim={dim}, "
            f"got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(count, dim).astype(np.float64)


def load_manifest(path, *, normalize_on_load: bool = True, features_path=None) -> Dataset:
    """Load a dataset from either on-disk format.

    The format is detected from the header: a ``row`` column marks a
    companion manifest whose vectors live in a binary sidecar
    (``features_path``, defaulting to the manifest path with ``.bin``).
    """
    path = str(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("empty manifest", line=1) from None
        if header[: len(_LABEL_COLUMNS)] != _LABEL_COLUMNS:
            raise ManifestError(
                f"header must start with {','.join(_LABEL_COLUMNS)}", line=1
            )
        tail = header[len(_LABEL_COLUMNS):]
        if tail == ["row"]:
            sidecar = features_path if features_path is not None else _sibling(path, ".bin")
            features = _read_binary_features(sidecar)
            rows = _parse_rows(reader, n_extra=1)
            return _assemble(rows, features, from_rows=True,
                             normalize_on_load=normalize_on_load)
        if tail != [f"f{i}" for i in range(len(tail))] or not tail:
            raise ManifestError(
                "header must end with either a 'row' column or f0,...,f{N-1}", line=1
            )
        dim = len(tail)
        rows = _parse_rows(reader, n_extra=dim)
        values = np.empty((len(rows), dim))
        for i, (line, _, extra) in enumerate(rows):
            try:
                values[i] = [float(x) for x in extra]
            except ValueError as exc:
                raise ManifestError(f"bad float value: {exc}", line=line) from None
        return _assemble(rows, values, from_rows=False,
                         normalize_on_load=normalize_on_load)


def _parse_rows(reader, n_extra):
    expected = len(_LABEL_COLUMNS) + n_extra
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != expected:
            raise ManifestError(
                f"expected {expected} fields, got {len(row)}", line=line_no
            )
        rows.append((line_no, row[: len(_LABEL_COLUMNS)], row[len(_LABEL_COLUMNS):]))
    if not rows:
        raise ManifestError("manifest has no data rows")
    return rows


def _assemble(rows, features, *, from_rows, normalize_on_load):
    records = []
    for i, (line_no, labels, extra) in enumerate(rows):
        record_id, subject, media_id, template_id, split = labels
        if from_rows:
            try:
                row = int(extra[0])
            except ValueError:
                raise ManifestError(f"bad row index {extra[0]!r}", line=line_no) from None
            if not 0 <= row < features.shape[0]:
                raise ManifestError(
                    f"row index {row} outside sidecar with {features.shape[0]} rows",
                    line=line_no,
                )
            values = features[row]
        else:
            values = features[i]
        try:
            if normalize_on_load:
                values = normalize(values)
            records.append(
                FeatureRecord(
                    record_id=record_id,
                    subject=subject,
                    media_id=media_id,
                    values=values,
                    template_id=template_id or None,
                    split=split or None,
                )
            )
        except (NormalizationError, DataError) as exc:
            raise ManifestError(str(exc), line=line_no) from exc
    try:
        return Dataset(records)
    except DataError as exc:
        raise ManifestError(str(exc)) from exc
