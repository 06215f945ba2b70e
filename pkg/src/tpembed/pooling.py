"""Collapse multi-item templates into single unit-norm vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureRecord, normalize
from .errors import DataError


@dataclass(frozen=True)
class Template:
    """A set of records compared as one unit."""

    template_id: str
    items: tuple[FeatureRecord, ...]
    subject: str | None = None

    def __post_init__(self):
        if not self.items:
            raise DataError(f"template {self.template_id!r} is empty")
        dim = self.items[0].dim
        if any(item.dim != dim for item in self.items):
            raise DataError(f"template {self.template_id!r} mixes dimensions")


def templates_from_dataset(dataset: Dataset) -> list[Template]:
    """Group a dataset's records by template_id, in first-seen order."""
    templates = []
    for template_id, indices in dataset.template_index.items():
        items = tuple(dataset.records[i] for i in indices)
        subjects = {item.subject for item in items}
        subject = items[0].subject if len(subjects) == 1 else None
        templates.append(Template(template_id, items, subject))
    if not templates:
        raise DataError("dataset has no template ids")
    return templates


def pool_average(template: Template) -> np.ndarray:
    """Componentwise mean over all items, re-normalized."""
    stacked = np.stack([item.values for item in template.items])
    return normalize(stacked.mean(axis=0))


def pool_media(template: Template) -> np.ndarray:
    """Mean within each media source, then mean across media, re-normalized.

    Weights every media source equally regardless of how many items it
    contributed.
    """
    by_media: dict[str, list[np.ndarray]] = {}
    for item in template.items:
        if not item.media_id:
            raise DataError(
                f"template {template.template_id!r}: media pooling needs media ids"
            )
        by_media.setdefault(item.media_id, []).append(item.values)
    media_means = [np.mean(vals, axis=0) for vals in by_media.values()]
    return normalize(np.mean(media_means, axis=0))


def pool_templates(templates, mode: str) -> Dataset:
    """Pool every template into one record; ids carry over."""
    if mode == "average":
        pooler = pool_average
    elif mode == "media":
        pooler = pool_media
    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    records = [
        FeatureRecord(
            record_id=t.template_id,
            subject=t.subject if t.subject is not None else "",
            media_id="",
            values=pooler(t),
            template_id=t.template_id,
        )
        for t in templates
    ]
    return Dataset(records)
