"""Tests for the data layer: normalization, records, synthesis, and IO."""

import csv
import math

import numpy as np
import pytest

from tpembed.data import (
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
from tpembed.errors import DataError, ManifestError, NormalizationError


class TestNormalize:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.standard_normal(17)
            assert math.isclose(np.linalg.norm(normalize(v)), 1.0, rel_tol=1e-12)

    def test_direction_preserved(self):
        v = np.array([3.0, 4.0])
        out = normalize(v)
        assert np.allclose(out, [0.6, 0.8])

    def test_zero_vector_rejected(self):
        with pytest.raises(NormalizationError):
            normalize(np.zeros(4))

    def test_non_finite_rejected(self):
        with pytest.raises(NormalizationError):
            normalize(np.array([1.0, np.nan]))
        with pytest.raises(NormalizationError):
            normalize(np.array([1.0, np.inf]))

    def test_already_unit_is_fixed_point(self):
        v = normalize(np.random.default_rng(1).standard_normal(8))
        assert np.allclose(normalize(v), v, atol=1e-15)


class TestFeatureRecord:
    def test_basic_fields(self):
        rec = FeatureRecord("r0", "s0", "m0", np.array([1.0, 0.0]))
        assert rec.dim == 2
        assert rec.template_id is None
        assert rec.split is None

    def test_values_read_only(self):
        rec = FeatureRecord("r0", "s0", "m0", np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            rec.values[0] = 5.0

    def test_rejects_matrix_values(self):
        with pytest.raises(DataError):
            FeatureRecord("r0", "s0", "m0", np.zeros((2, 2)))

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            FeatureRecord("r0", "s0", "m0", np.array([np.nan]))

    def test_rejects_unknown_split(self):
        with pytest.raises(DataError):
            FeatureRecord("r0", "s0", "m0", np.array([1.0]), split="holdout")


class TestDataset:
    def make(self):
        return Dataset(
            [
                FeatureRecord("r0", "a", "m0", np.array([1.0, 0.0]), "t0", "train"),
                FeatureRecord("r1", "a", "m1", np.array([0.0, 1.0]), "t0", "test"),
                FeatureRecord("r2", "b", "m0", np.array([1.0, 1.0]), "t1", "train"),
            ]
        )

    def test_indexes(self):
        data = self.make()
        assert data.subject_index == {"a": [0, 1], "b": [2]}
        assert data.template_index == {"t0": [0, 1], "t1": [2]}
        assert data.features.shape == (3, 2)
        assert data.subjects == ["a", "a", "b"]

    def test_features_read_only(self):
        data = self.make()
        with pytest.raises(ValueError):
            data.features[0, 0] = 9.0

    def test_duplicate_record_id_rejected(self):
        rec = FeatureRecord("r0", "a", "m0", np.array([1.0]))
        with pytest.raises(DataError):
            Dataset([rec, FeatureRecord("r0", "b", "m0", np.array([2.0]))])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(DataError):
            Dataset(
                [
                    FeatureRecord("r0", "a", "m0", np.array([1.0])),
                    FeatureRecord("r1", "a", "m0", np.array([1.0, 2.0])),
                ]
            )

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            Dataset([])

    def test_filter_split(self):
        data = self.make()
        assert [r.record_id for r in data.filter_split("train").records] == ["r0", "r2"]

    def test_normalized(self):
        data = self.make().normalized()
        assert np.allclose(np.linalg.norm(data.features, axis=1), 1.0)


class TestGenerateSynthetic:
    def test_shapes_and_labels(self):
        data = generate_synthetic(SynthConfig(num_subjects=4, records_per_subject=3, dim=8))
        assert len(data) == 12
        assert data.dim == 8
        assert len(data.subject_index) == 4
        assert all(len(idx) == 3 for idx in data.subject_index.values())

    def test_unit_norm_records(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=5, dim=16,
                        within_class_sigma=0.4, seed=3)
        )
        assert np.allclose(np.linalg.norm(data.features, axis=1), 1.0, atol=1e-12)

    def test_zero_sigma_collapses_to_mean(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=2, records_per_subject=4, dim=8, seed=5)
        )
        for indices in data.subject_index.values():
            block = data.features[indices]
            assert np.allclose(block, block[0], atol=1e-12)

    def test_deterministic_per_seed(self):
        cfg = SynthConfig(num_subjects=3, records_per_subject=4, dim=8,
                          within_class_sigma=0.2, seed=11)
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        assert np.array_equal(a.features, b.features)
        c = generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=4, dim=8,
                        within_class_sigma=0.2, seed=12)
        )
        assert not np.array_equal(a.features, c.features)

    def test_media_round_robin(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=1, records_per_subject=5, dim=4,
                        media_per_subject=2, seed=0)
        )
        media = [rec.media_id for rec in data.records]
        assert media == ["s0000_m00", "s0000_m01", "s0000_m00", "s0000_m01", "s0000_m00"]

    def test_media_offsets_shared_within_media(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=1, records_per_subject=6, dim=8,
                        media_per_subject=2, media_offset_sigma=0.5, seed=2)
        )
        by_media = {}
        for rec in data.records:
            by_media.setdefault(rec.media_id, []).append(rec.values)
        for vectors in by_media.values():
            assert np.allclose(vectors, vectors[0], atol=1e-12)

    def test_template_blocks(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=2, records_per_subject=6, dim=4,
                        templates_per_subject=2, seed=0)
        )
        assert len(data.template_index) == 4
        for indices in data.template_index.values():
            assert len(indices) == 3
            assert indices == list(range(indices[0], indices[0] + 3))

    def test_signal_dim_confines_means(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=5, records_per_subject=2, dim=12,
                        signal_dim=4, seed=9)
        )
        assert np.allclose(data.features[:, 4:], 0.0, atol=1e-12)

    def test_signal_dim_none_matches_full_dim(self):
        base = SynthConfig(num_subjects=3, records_per_subject=2, dim=6,
                           within_class_sigma=0.3, seed=4)
        full = SynthConfig(num_subjects=3, records_per_subject=2, dim=6,
                           within_class_sigma=0.3, signal_dim=6, seed=4)
        assert np.array_equal(
            generate_synthetic(base).features, generate_synthetic(full).features
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(num_subjects=0, records_per_subject=1, dim=2)
        with pytest.raises(ValueError):
            SynthConfig(num_subjects=1, records_per_subject=1, dim=2,
                        within_class_sigma=-0.1)
        with pytest.raises(ValueError):
            SynthConfig(num_subjects=1, records_per_subject=2, dim=2,
                        templates_per_subject=3)
        with pytest.raises(ValueError):
            SynthConfig(num_subjects=1, records_per_subject=1, dim=2, signal_dim=3)


class TestSplitHalf:
    def test_per_subject_halves(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=5, dim=4, seed=0)
        )
        train, test = split_half(data)
        assert len(train) == 6
        assert len(test) == 9
        for subject, indices in train.subject_index.items():
            assert len(indices) == 2
        train_ids = {r.record_id for r in train.records}
        test_ids = {r.record_id for r in test.records}
        assert not train_ids & test_ids
        assert len(train_ids | test_ids) == len(data)

    def test_first_records_go_to_train(self):
        data = generate_synthetic(
            SynthConfig(num_subjects=1, records_per_subject=4, dim=4, seed=0)
        )
        train, test = split_half(data)
        assert [r.record_id for r in train.records] == ["s0000_r0000", "s0000_r0001"]
        assert [r.record_id for r in test.records] == ["s0000_r0002", "s0000_r0003"]


class TestRoundTrip:
    def make(self):
        return generate_synthetic(
            SynthConfig(num_subjects=3, records_per_subject=4, dim=6,
                        within_class_sigma=0.2, media_per_subject=2,
                        templates_per_subject=2, seed=13)
        )

    def test_csv_round_trip_exact(self, tmp_path):
        data = self.make()
        path = tmp_path / "data.csv"
        save_csv(data, path)
        loaded = load_manifest(path, normalize_on_load=False)
        assert np.array_equal(loaded.features, data.features)
        renormalized = load_manifest(path)
        assert np.allclose(renormalized.features, data.features, atol=1e-15)
        for a, b in zip(loaded.records, data.records):
            assert (a.record_id, a.subject, a.media_id, a.template_id, a.split) == (
                b.record_id, b.subject, b.media_id, b.template_id, b.split
            )

    def test_binary_round_trip_float32(self, tmp_path):
        data = self.make()
        path = tmp_path / "data.bin"
        save_binary(data, path)
        loaded = load_manifest(tmp_path / "data.csv")
        expected = data.features.astype(np.float32).astype(np.float64)
        expected /= np.linalg.norm(expected, axis=1, keepdims=True)
        assert np.allclose(loaded.features, expected, atol=1e-12)
        assert [r.record_id for r in loaded.records] == [
            r.record_id for r in data.records
        ]

    def test_load_without_normalization(self, tmp_path):
        rec = FeatureRecord("r0", "a", "m0", np.array([3.0, 4.0]))
        path = tmp_path / "raw.csv"
        save_csv(Dataset([rec]), path)
        loaded = load_manifest(path, normalize_on_load=False)
        assert np.allclose(loaded.features[0], [3.0, 4.0])
        loaded_norm = load_manifest(path)
        assert np.allclose(loaded_norm.features[0], [0.6, 0.8])


class TestManifestErrors:
    def write(self, tmp_path, lines):
        path = tmp_path / "bad.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert err.value.line == 1

    def test_bad_header(self, tmp_path):
        path = self.write(tmp_path, ["id,subject,f0", "r0,a,1.0"])
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert err.value.line == 1

    def test_field_count_mismatch_reports_line(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "record_id,subject,media_id,template_id,split,f0,f1",
                "r0,a,m0,,,1.0,0.0",
                "r1,a,m0,,,1.0",
            ],
        )
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert err.value.line == 3

    def test_bad_float_reports_line(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "record_id,subject,media_id,template_id,split,f0",
                "r0,a,m0,,,oops",
            ],
        )
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert err.value.line == 2

    def test_zero_vector_reports_line(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "record_id,subject,media_id,template_id,split,f0,f1",
                "r0,a,m0,,,1.0,0.0",
                "r1,a,m0,,,0.0,0.0",
            ],
        )
        with pytest.raises(ManifestError) as err:
            load_manifest(path)
        assert err.value.line == 3

    def test_missing_sidecar(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                "record_id,subject,media_id,template_id,split,row",
                "r0,a,m0,,,0",
            ],
        )
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_row_index_out_of_range(self, tmp_path):
        data = generate_synthetic(SynthConfig(num_subjects=1, records_per_subject=1, dim=2))
        save_binary(data, tmp_path / "data.bin")
        manifest = tmp_path / "data.csv"
        text = manifest.read_text(encoding="utf-8")
        manifest.write_text(text.replace(",0\n", ",5\n"), encoding="utf-8")
        with pytest.raises(ManifestError) as err:
            load_manifest(manifest)
        assert err.value.line == 2

    def test_corrupt_magic(self, tmp_path):
        data = generate_synthetic(SynthConfig(num_subjects=1, records_per_subject=1, dim=2))
        save_binary(data, tmp_path / "data.bin")
        blob = (tmp_path / "data.bin").read_bytes()
        (tmp_path / "data.bin").write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "data.csv")

    def test_truncated_sidecar(self, tmp_path):
        data = generate_synthetic(SynthConfig(num_subjects=1, records_per_subject=2, dim=4))
        save_binary(data, tmp_path / "data.bin")
        blob = (tmp_path / "data.bin").read_bytes()
        (tmp_path / "data.bin").write_bytes(blob[:-4])
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "data.csv")
