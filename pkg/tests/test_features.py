"""Toy backbone determinism and the GZFS feature store round-trip."""

from __future__ import annotations

import numpy as np
import pytest

from gazefusion.features import (
    FeatureFormatError,
    InputError,
    MissingRecordError,
    TokenSequence,
    ToyBackboneConfig,
    cell_features,
    feature_store_read,
    feature_store_write,
    iter_records,
    read_ppm,
    toy_backbone_extract,
    verify_store,
    write_ppm,
)


def coverage_by_rasterization(head_box, grid, resolution=2000):
    """Independent oracle: rasterize the box on a fine pixel grid per cell."""
    x0, y0, x1, y1 = head_box
    ys, xs = np.meshgrid((np.arange(resolution) + 0.5) / resolution,
                         (np.arange(resolution) + 0.5) / resolution, indexing="ij")
    inside = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
    cov = np.empty(grid * grid)
    step = resolution // grid
    for i in range(grid):
        for j in range(grid):
            cell = inside[i * step:(i + 1) * step, j * step:(j + 1) * step]
            cov[i * grid + j] = cell.mean()
    return cov


class TestToyBackbone:
    def test_uniform_image_full_box_gives_identical_tokens(self):
        config = ToyBackboneConfig(grid=4, out_dim=8)
        image = np.full((32, 32, 3), 128, dtype=np.uint8)
        seq = toy_backbone_extract(image, (0.0, 0.0, 1.0, 1.0), config)
        assert seq.tokens.shape == (16, 8)
        np.testing.assert_array_equal(seq.tokens, np.tile(seq.tokens[0], (16, 1)))

    def test_deterministic(self):
        config = ToyBackboneConfig(grid=3, out_dim=16, projection_seed=5)
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        box = (0.1, 0.2, 0.6, 0.9)
        a = toy_backbone_extract(image, box, config).tokens
        b = toy_backbone_extract(image, box, config).tokens
        np.testing.assert_array_equal(a, b)

    def test_coverage_channel_matches_geometric_oracle(self):
        rng = np.random.default_rng(1)
        image = rng.integers(0, 256, (40, 40, 3), dtype=np.uint8)
        for box in [(0.0, 0.0, 0.5, 0.5), (0.13, 0.27, 0.61, 0.83), (0.5, 0.1, 0.9, 0.4)]:
            feats = cell_features(image, box, grid=4)
            oracle = coverage_by_rasterization(box, grid=4)
            np.testing.assert_allclose(feats[:, 3], oracle, atol=2e-3)

    def test_moving_box_changes_only_coverage_channel(self):
        rng = np.random.default_rng(2)
        image = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        left = cell_features(image, (0.0, 0.25, 0.5, 0.75), grid=4)
        right = cell_features(image, (0.5, 0.25, 1.0, 0.75), grid=4)
        np.testing.assert_array_equal(left[:, :3], right[:, :3])
        assert np.any(left[:, 3] != right[:, 3])

    def test_degenerate_box_rejected(self):
        config = ToyBackboneConfig(grid=2, out_dim=4)
        image = np.zeros((8, 8, 3), dtype=np.uint8)
        for box in [(0.5, 0.2, 0.5, 0.8), (0.6, 0.2, 0.4, 0.8), (-0.1, 0.0, 0.5, 0.5)]:
            with pytest.raises(InputError):
                toy_backbone_extract(image, box, config)


class TestFeatureStore:
    def _seq(self, session="s01", view="infant", ts=12.345, seed=0, n=6, d=4):
        rng = np.random.default_rng(seed)
        return TokenSequence(session=session, view=view, timestamp_s=ts,
                             tokens=rng.standard_normal((n, d)).astype(np.float32))

    def test_round_trip_bit_exact(self, tmp_path):
        seq = self._seq()
        feature_store_write(seq, tmp_path)
        loaded = feature_store_read(tmp_path, "s01", "infant", 12.345)
        np.testing.assert_array_equal(loaded.tokens, seq.tokens)
        assert (loaded.session, loaded.view, loaded.timestamp_ms) == ("s01", "infant", 12345)

    def test_missing_record_is_lookup_error(self, tmp_path):
        feature_store_write(self._seq(), tmp_path)
        with pytest.raises(MissingRecordError):
            feature_store_read(tmp_path, "s01", "infant", 99.0)
        with pytest.raises(MissingRecordError):
            feature_store_read(tmp_path, "s02", "infant", 12.345)

    def test_sessions_with_same_timestamp_stay_distinct(self, tmp_path):
        a = self._seq(session="s01", seed=1)
        b = self._seq(session="s02", seed=2)
        feature_store_write(a, tmp_path)
        feature_store_write(b, tmp_path)
        np.testing.assert_array_equal(
            feature_store_read(tmp_path, "s01", "infant", 12.345).tokens, a.tokens)
        np.testing.assert_array_equal(
            feature_store_read(tmp_path, "s02", "infant", 12.345).tokens, b.tokens)

    def test_corrupt_header_is_format_error(self, tmp_path):
        path = feature_store_write(self._seq(), tmp_path)
        blob = path.read_bytes()
        path.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(FeatureFormatError, match="magic"):
            feature_store_read(tmp_path, "s01", "infant", 12.345)
        path.write_bytes(blob[:-8])
        with pytest.raises(FeatureFormatError, match="truncated"):
            feature_store_read(tmp_path, "s01", "infant", 12.345)

    def test_enumeration_independent_of_write_order(self, tmp_path):
        seqs = [self._seq(session=s, view=v, ts=t, seed=i)
                for i, (s, v, t) in enumerate([("s02", "parent", 1.0), ("s01", "infant", 2.0),
                                               ("s01", "parent", 1.0), ("s01", "infant", 1.0)])]
        for seq in seqs:
            feature_store_write(seq, tmp_path)
        keys = [(s, v, ms) for s, v, ms, _ in iter_records(tmp_path)]
        assert keys == sorted((q.session, q.view, q.timestamp_ms) for q in seqs)
        assert verify_store(tmp_path) == []

    def test_double_write_is_last_writer_wins(self, tmp_path):
        first = self._seq(seed=1)
        second = self._seq(seed=2)
        feature_store_write(first, tmp_path)
        feature_store_write(second, tmp_path)
        loaded = feature_store_read(tmp_path, "s01", "infant", 12.345)
        np.testing.assert_array_equal(loaded.tokens, second.tokens)
        assert verify_store(tmp_path) == []

    def test_verify_flags_relocated_record(self, tmp_path):
        path = feature_store_write(self._seq(), tmp_path)
        moved = path.with_name("99999.gzfs")
        path.rename(moved)
        issues = verify_store(tmp_path)
        assert len(issues) == 1 and "identity" in issues[0]


class TestPpm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        image = rng.integers(0, 256, (10, 14, 3), dtype=np.uint8)
        path = tmp_path / "frame.ppm"
        write_ppm(path, image)
        np.testing.assert_array_equal(read_ppm(path), image)

    def test_rejects_non_p6(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(InputError, match="P6"):
            read_ppm(path)
