"""Grid descriptor extraction and its reduction identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import crowdlaf as cl
from crowdlaf.errors import (
    DimensionMismatch,
    EmptyMap,
    GridTooFine,
    InvalidConfig,
    MalformedHeader,
)


def random_map(seed, h=12, w=16, p=3):
    rng = np.random.default_rng(seed)
    data = rng.random((h, w, p))
    data /= data.sum(axis=2, keepdims=True)
    return cl.AttributeMap(data.astype(np.float32))


def split_map():
    """4x4x2 map: left half one-hot class 0, right half one-hot class 1."""
    data = np.zeros((4, 4, 2), dtype=np.float32)
    data[:, :2, 0] = 1.0
    data[:, 2:, 1] = 1.0
    return cl.AttributeMap(data)


class TestExtract:
    def test_constant_map_gives_identical_unit_descriptors(self):
        q = np.array([0.3, 0.7], dtype=np.float32)
        amap = cl.AttributeMap(np.tile(q, (9, 12, 1)))
        ds = cl.extract_descriptors(amap, cl.GridSpec(3, 2, 2, 2))
        expected = np.tile(q.astype(np.float64), 4)
        expected /= np.linalg.norm(expected)
        assert ds.vectors.shape == (6, 8)
        np.testing.assert_allclose(ds.vectors, np.tile(expected, (6, 1)), atol=1e-12)
        assert not ds.zero_mask.any()

    def test_split_map_hand_pooling(self):
        amap = split_map()
        ds = cl.extract_descriptors(amap, cl.GridSpec(1, 1, 1, 2))
        # oracle: pool the two halves by hand, concatenate, normalize
        left = amap.data[:, :2].mean(axis=(0, 1), dtype=np.float64)
        right = amap.data[:, 2:].mean(axis=(0, 1), dtype=np.float64)
        oracle = np.concatenate([left, right])
        oracle /= np.linalg.norm(oracle)
        np.testing.assert_allclose(ds.vectors[0], oracle, atol=1e-12)
        np.testing.assert_allclose(
            ds.vectors[0], [0.7071067811865475, 0.0, 0.0, 0.7071067811865475], atol=1e-12
        )

    def test_unit_norm_or_zero(self):
        amap = random_map(0)
        ds = cl.extract_descriptors(amap, cl.GridSpec(4, 4, 1, 2))
        norms = np.linalg.norm(ds.vectors, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        rows=st.integers(1, 4),
        cols=st.integers(1, 4),
        pr=st.integers(1, 2),
        pc=st.integers(1, 2),
        p=st.integers(1, 4),
    )
    def test_dimension_law(self, seed, rows, cols, pr, pc, p):
        amap = random_map(seed, h=12, w=12, p=p)
        grid = cl.GridSpec(rows, cols, pr, pc)
        ds = cl.extract_descriptors(amap, grid)
        assert ds.vectors.shape == (rows * cols, pr * pc * p)

    def test_channel_permutation_equivariance(self):
        amap = random_map(5, p=4)
        perm = np.array([2, 0, 3, 1])
        permuted = cl.AttributeMap(amap.data[:, :, perm])
        grid = cl.GridSpec(3, 4, 2, 2)
        ds = cl.extract_descriptors(amap, grid)
        ds_perm = cl.extract_descriptors(permuted, grid)
        blocks = ds.vectors.reshape(ds.count, grid.subcells, 4)
        blocks_perm = ds_perm.vectors.reshape(ds.count, grid.subcells, 4)
        assert np.array_equal(blocks_perm, blocks[:, :, perm])

    def test_mass_conservation(self):
        amap = random_map(9, h=13, w=11, p=3)
        grid = cl.GridSpec(3, 4, 2, 2)
        sums, areas = cl.pooled_sums(amap, grid)
        assert int(areas.sum()) == 13 * 11
        per_channel = sums.sum(axis=(0, 1)) / (13 * 11)
        np.testing.assert_allclose(
            per_channel, amap.data.mean(axis=(0, 1), dtype=np.float64), atol=1e-6
        )

    def test_uneven_division_covers_every_pixel(self):
        amap = random_map(2, h=10, w=7)
        _, areas = cl.pooled_sums(amap, cl.GridSpec(3, 3, 2, 2))
        assert (areas >= 1).all()
        assert int(areas.sum()) == 70

    def test_grid_too_fine(self):
        amap = random_map(1, h=4, w=4)
        with pytest.raises(GridTooFine):
            cl.extract_descriptors(amap, cl.GridSpec(1, 1, 5, 1))
        with pytest.raises(GridTooFine):
            cl.extract_descriptors(amap, cl.GridSpec(5, 1, 1, 1))

    def test_zero_cells_flagged_and_zero(self):
        amap = random_map(3, h=8, w=8, p=2)
        inside = np.zeros((8, 8), dtype=bool)
        inside[:, 4:] = True
        masked = cl.apply_roi(amap, cl.RoiMask(inside))
        ds = cl.extract_descriptors(masked, cl.GridSpec(1, 2, 1, 1))
        assert ds.zero_mask.tolist() == [True, False]
        assert np.array_equal(ds.vectors[0], np.zeros(2))
        assert np.linalg.norm(ds.vectors[1]) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        amap = random_map(4)
        grid = cl.GridSpec(3, 3, 2, 2)
        a = cl.extract_descriptors(amap, grid)
        b = cl.extract_descriptors(amap, grid)
        assert np.array_equal(a.vectors, b.vectors)

    def test_invalid_grid(self):
        with pytest.raises(InvalidConfig):
            cl.GridSpec(0, 1)
        with pytest.raises(InvalidConfig):
            cl.GridSpec(1, 1, 1, -2)


class TestReductions:
    def test_holistic_equals_degenerate_grid(self):
        amap = random_map(11)
        hf = cl.holistic_feature(amap)
        laf = cl.extract_descriptors(amap, cl.GridSpec(1, 1, 1, 1)).vectors[0]
        assert np.array_equal(hf, laf)

    def test_pyramid_equals_degenerate_grid(self):
        amap = random_map(12)
        sppf = cl.pyramid_feature(amap, (2, 2))
        laf = cl.extract_descriptors(amap, cl.GridSpec(1, 1, 2, 2)).vectors[0]
        assert np.array_equal(sppf, laf)

    def test_pyramid_1x1_is_holistic(self):
        amap = random_map(13)
        assert np.array_equal(cl.pyramid_feature(amap, (1, 1)), cl.holistic_feature(amap))

    def test_holistic_one_hot(self):
        data = np.zeros((5, 6, 4), dtype=np.float32)
        data[:, :, 0] = 1.0
        hf = cl.holistic_feature(cl.AttributeMap(data))
        np.testing.assert_allclose(hf, [1.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_holistic_half_and_half(self):
        data = np.zeros((4, 4, 3), dtype=np.float32)
        data[:2, :, 0] = 1.0
        data[2:, :, 1] = 1.0
        hf = cl.holistic_feature(cl.AttributeMap(data))
        inv = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(hf, [inv, inv, 0.0], atol=1e-12)

    def test_pyramid_on_split_map(self):
        sppf = cl.pyramid_feature(split_map(), (1, 2))
        np.testing.assert_allclose(
            sppf, [0.7071067811865475, 0.0, 0.0, 0.7071067811865475], atol=1e-12
        )

    def test_constant_map_pyramid(self):
        q = np.array([0.25, 0.75], dtype=np.float32)
        amap = cl.AttributeMap(np.tile(q, (8, 8, 1)))
        sppf = cl.pyramid_feature(amap, (2, 2))
        expected = np.tile(q.astype(np.float64), 4)
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(sppf, expected, atol=1e-12)

    def test_empty_map_rejected(self):
        empty = cl.AttributeMap(np.zeros((0, 4, 2), dtype=np.float32))
        with pytest.raises(EmptyMap):
            cl.holistic_feature(empty)
        with pytest.raises(EmptyMap):
            cl.pyramid_feature(empty, (1, 1))


class TestDescriptorDump:
    def test_roundtrip(self, tmp_path):
        ds = cl.extract_descriptors(random_map(7), cl.GridSpec(2, 2, 1, 2))
        path = tmp_path / "descr.lafd"
        cl.store_descriptors(ds, path)
        loaded = cl.load_descriptors(path)
        assert loaded.shape == ds.vectors.shape
        np.testing.assert_array_equal(loaded, ds.vectors.astype(np.float32))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "descr.lafd"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(MalformedHeader):
            cl.load_descriptors(path)

    def test_truncated_payload(self, tmp_path):
        ds = cl.extract_descriptors(random_map(8), cl.GridSpec(2, 2))
        path = tmp_path / "descr.lafd"
        cl.store_descriptors(ds, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DimensionMismatch):
            cl.load_descriptors(path)
