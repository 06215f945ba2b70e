"""Tests for template construction and the two pooling rules."""

import numpy as np
import pytest

from tpembed.data import Dataset, FeatureRecord, SynthConfig, generate_synthetic, normalize
from tpembed.errors import DataError
from tpembed.pooling import (
    Template,
    pool_average,
    pool_media,
    pool_templates,
    templates_from_dataset,
)


def record(rid, subject, media, values, template="t0"):
    return FeatureRecord(rid, subject, media, np.asarray(values, dtype=float), template)


class TestTemplate:
    def test_empty_rejected(self):
        with pytest.raises(DataError):
            Template("t0", ())

    def test_dim_mismatch_rejected(self):
        with pytest.raises(DataError):
            Template("t0", (record("r0", "a", "m", [1.0]),
                            record("r1", "a", "m", [1.0, 2.0])))

    def test_from_dataset_groups_and_orders(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=2, records_per_subject=4, dim=4,
                        templates_per_subject=2, seed=0)
        )
        templates = templates_from_dataset(data)
        assert [t.template_id for t in templates] == [
            "s0000_t00", "s0000_t01", "s0001_t00", "s0001_t01"
        ]
        assert all(len(t.items) == 2 for t in templates)
        assert [t.subject for t in templates] == ["s0000", "s0000", "s0001", "s0001"]

    def test_from_dataset_without_templates_rejected(self):
        data = generate_synthetic(SynthConfig(num_subjects=2, records_per_subject=2, dim=4))
        with pytest.raises(DataError):
            templates_from_dataset(data)

    def test_mixed_subject_template_has_no_subject(self):
        data = Dataset(
            [
                record("r0", "a", "m0", [1.0, 0.0]),
                record("r1", "b", "m0", [0.0, 1.0]),
            ]
        )
        templates = templates_from_dataset(data)
        assert templates[0].subject is None


class TestPoolAverage:
    def test_singleton_identity(self):
        v = normalize(np.array([0.3, -0.4, 0.5]))
        t = Template("t0", (record("r0", "a", "m", v),))
        assert np.allclose(pool_average(t), v, atol=1e-15)

    def test_mean_then_normalize(self):
        t = Template(
            "t0",
            (record("r0", "a", "m0", [1.0, 0.0]), record("r1", "a", "m1", [0.0, 1.0])),
        )
        expect = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert np.allclose(pool_average(t), expect, atol=1e-15)

    def test_opposed_items_rejected(self):
        t = Template(
            "t0",
            (record("r0", "a", "m0", [1.0, 0.0]), record("r1", "a", "m1", [-1.0, 0.0])),
        )
        with pytest.raises(Exception):
            pool_average(t)


class TestPoolMedia:
    def test_single_media_equals_average(self):
        rng = np.random.default_rng(0)
        items = tuple(
            record(f"r{i}", "a", "m0", normalize(rng.standard_normal(6)))
            for i in range(4)
        )
        t = Template("t0", items)
        assert np.allclose(pool_media(t), pool_average(t), atol=1e-15)

    def test_equal_multiplicity_equals_average(self):
        rng = np.random.default_rng(1)
        items = tuple(
            record(f"r{i}", "a", f"m{i % 2}", normalize(rng.standard_normal(6)))
            for i in range(6)
        )
        t = Template("t0", items)
        assert np.allclose(pool_media(t), pool_average(t), atol=1e-12)

    def test_media_weighted_equally(self):
        # three copies from medium 0, one from medium 1: media pooling
        # weights the two media equally, average pooling does not
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        t = Template(
            "t0",
            (
                record("r0", "s", "m0", a),
                record("r1", "s", "m0", a),
                record("r2", "s", "m0", a),
                record("r3", "s", "m1", b),
            ),
        )
        assert np.allclose(pool_media(t), normalize(a + b), atol=1e-15)
        assert np.allclose(pool_average(t), normalize(3 * a + b), atol=1e-15)

    def test_missing_media_id_rejected(self):
        t = Template("t0", (FeatureRecord("r0", "a", "", np.array([1.0, 0.0])),))
        with pytest.raises(DataError):
            pool_media(t)

    def test_media_insertion_order_irrelevant(self):
        rng = np.random.default_rng(2)
        vals = [normalize(rng.standard_normal(5)) for _ in range(4)]
        fwd = Template(
            "t0",
            (
                record("r0", "s", "m0", vals[0]),
                record("r1", "s", "m0", vals[1]),
                record("r2", "s", "m1", vals[2]),
                record("r3", "s", "m1", vals[3]),
            ),
        )
        rev = Template(
            "t0",
            (
                record("r3", "s", "m1", vals[3]),
                record("r2", "s", "m1", vals[2]),
                record("r1", "s", "m0", vals[1]),
                record("r0", "s", "m0", vals[0]),
            ),
        )
        assert np.allclose(pool_media(fwd), pool_media(rev), atol=1e-12)


class TestPoolTemplates:
    def make_data(self):
        return generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=6, dim=8,
                        within_class_sigma=0.3, media_per_subject=2,
                        templates_per_subject=2, seed=3)
        )

    def test_one_record_per_template(self):
        data = self.make_data()
        pooled = pool_templates(templates_from_dataset(data), "average")
        assert len(pooled) == 6
        assert pooled.dim == 8
        assert [r.record_id for r in pooled.records] == list(data.template_index)
        assert np.allclose(np.linalg.norm(pooled.features, axis=1), 1.0, atol=1e-12)

    def test_subjects_carry_over(self):
        data = self.make_data()
        pooled = pool_templates(templates_from_dataset(data), "media")
        assert pooled.subjects == ["s0000", "s0000", "s0001", "s0001", "s0002", "s0002"]

    def test_modes_differ_on_unbalanced_media(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=9, dim=8,
                        within_class_sigma=0.2, media_per_subject=2,
                        media_offset_sigma=0.8, templates_per_subject=3, seed=4)
        )
        templates = templates_from_dataset(data)
        avg = pool_templates(templates, "average").features
        med = pool_templates(templates, "media").features
        assert not np.allclose(avg, med)

    def test_unknown_mode_rejected(self):
        data = self.make_data()
        with pytest.raises(ValueError):
            pool_templates(templates_from_dataset(data), "max")
