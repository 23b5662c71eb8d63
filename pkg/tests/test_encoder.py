"""Assignment weights, residual encoding, normalization and similarity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import crowdlaf as cl
from crowdlaf.encoder import FULL, RAW
from crowdlaf.errors import (
    DimensionMismatch,
    InvalidBeta,
    InvalidKappa,
    MalformedHeader,
    NotNormalized,
    ShapeMismatch,
)


def random_instance(seed, n=12, k=4, d=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.normal(size=(k, d))


def naive_encode(xs, centers, alpha):
    """Literal double loop over descriptors and centroids."""
    k, d = centers.shape
    blocks = [np.zeros(d) for _ in range(k)]
    for i in range(xs.shape[0]):
        for j in range(k):
            blocks[j] += alpha[i, j] * (xs[i] - centers[j])
    return np.concatenate(blocks)


class TestHardAssignment:
    def test_descriptor_at_centroid(self):
        _, centers = random_instance(0, k=5)
        w = cl.assign_hard(centers[3][None, :], centers)
        assert w.alpha[0].tolist() == [0.0, 0.0, 0.0, 1.0, 0.0]

    def test_tie_goes_to_lowest_index(self):
        centers = np.array([[1.0, 0.0], [-1.0, 0.0]])
        w = cl.assign_hard(np.array([[0.0, 0.0]]), centers)
        assert w.alpha[0].tolist() == [1.0, 0.0]

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_matches_exhaustive_scan(self, seed):
        xs, centers = random_instance(seed)
        w = cl.assign_hard(xs, centers)
        for i, x in enumerate(xs):
            dists = [np.sum((x - c) ** 2) for c in centers]
            assert w.alpha[i].argmax() == int(np.argmin(dists))
            assert w.alpha[i].sum() == 1.0

    def test_dim_mismatch(self):
        xs, centers = random_instance(1)
        with pytest.raises(DimensionMismatch):
            cl.assign_hard(xs[:, :2], centers)


class TestSoftAssignment:
    def test_kappa_one_equals_hard_bitwise(self):
        xs, centers = random_instance(2)
        hard = cl.assign_hard(xs, centers)
        for beta in (0.0, 0.5, 10.0):
            soft = cl.soft_assignments(xs, centers, kappa=1, beta=beta)
            assert np.array_equal(soft.alpha, hard.alpha)

    def test_beta_zero_splits_evenly(self):
        xs, centers = random_instance(3)
        w = cl.soft_assignments(xs, centers, kappa=2, beta=0.0)
        nonzero = np.sort(w.alpha, axis=1)[:, -2:]
        assert (nonzero == 0.5).all()

    def test_hand_weights(self):
        # squared distances (0, ln 3) with beta 1 -> weights 1/(1+1/3), (1/3)/(1+1/3)
        centers = np.array([[0.0, 0.0], [math.sqrt(math.log(3.0)), 0.0]])
        w = cl.soft_assignments(np.array([[0.0, 0.0]]), centers, kappa=2, beta=1.0)
        np.testing.assert_allclose(w.alpha[0], [0.75, 0.25], atol=1e-12)

    @pytest.mark.parametrize("kappa", [0, -1, 5])
    def test_invalid_kappa(self, kappa):
        xs, centers = random_instance(4)  # k = 4
        with pytest.raises(InvalidKappa):
            cl.soft_assignments(xs, centers, kappa=kappa, beta=1.0)

    @pytest.mark.parametrize("beta", [-1.0, float("nan"), float("inf")])
    def test_invalid_beta(self, beta):
        xs, centers = random_instance(5)
        with pytest.raises(InvalidBeta):
            cl.soft_assignments(xs, centers, kappa=2, beta=beta)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        kappa=st.integers(1, 5),
        beta=st.floats(0.0, 50.0),
    )
    def test_rows_stochastic_with_bounded_support(self, seed, kappa, beta):
        xs, centers = random_instance(seed, n=20, k=5, d=3)
        w = cl.soft_assignments(xs, centers, kappa=kappa, beta=beta)
        assert np.abs(w.alpha.sum(axis=1) - 1.0).max() <= 1e-9
        assert (np.count_nonzero(w.alpha, axis=1) <= kappa).all()
        assert w.alpha.min() >= 0.0 and w.alpha.max() <= 1.0

    def test_nearest_weight_monotone_in_beta(self):
        xs, centers = random_instance(6, n=8, k=5)
        nearest = cl.assign_hard(xs, centers).alpha.argmax(axis=1)
        previous = None
        for beta in (0.0, 0.3, 1.0, 3.0, 10.0, 100.0):
            w = cl.soft_assignments(xs, centers, kappa=3, beta=beta)
            top = w.alpha[np.arange(len(xs)), nearest]
            # the nearest centroid always attains the row maximum (ties at beta=0)
            assert (top == w.alpha.max(axis=1)).all()
            if previous is not None:
                assert (top >= previous - 1e-12).all()
            previous = top


class TestEncode:
    def test_zero_residual(self):
        centers = np.array([[1.0, 2.0], [5.0, 5.0]])
        xs = centers[:1].copy()
        enc = cl.encode(xs, centers, cl.assign_hard(xs, centers))
        assert np.array_equal(enc.vector, np.zeros(4))
        assert enc.state == RAW

    def test_hand_case(self):
        centers = np.array([[0.0, 0.0], [10.0, 0.0]])
        xs = np.array([[1.0, 0.0], [1.0, 1.0]])
        enc = cl.encode(xs, centers, cl.assign_hard(xs, centers))
        assert enc.vector.tolist() == [2.0, 1.0, 0.0, 0.0]

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_matches_naive_double_loop(self, seed):
        rng = np.random.default_rng(seed)
        n, k, d = int(rng.integers(1, 21)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
        xs = rng.normal(size=(n, d))
        centers = rng.normal(size=(k, d))
        kappa = int(rng.integers(1, k + 1))
        w = cl.soft_assignments(xs, centers, kappa=kappa, beta=float(rng.uniform(0, 4)))
        enc = cl.encode(xs, centers, w)
        assert np.abs(enc.vector - naive_encode(xs, centers, w.alpha)).max() <= 1e-9

    def test_zero_mask_rows_contribute_nothing(self):
        xs, centers = random_instance(7, n=6)
        w = cl.soft_assignments(xs, centers, kappa=2, beta=1.0)
        mask = np.zeros(6, dtype=bool)
        mask[2] = True
        masked = cl.encode(xs, centers, w, zero_mask=mask)
        w_sub = cl.AssignmentWeights(
            np.delete(w.alpha, 2, axis=0), mode="soft", kappa=2, beta=1.0
        )
        manual = cl.encode(np.delete(xs, 2, axis=0), centers, w_sub)
        np.testing.assert_allclose(masked.vector, manual.vector, atol=1e-12)

    def test_shape_mismatch(self):
        xs, centers = random_instance(8)
        w = cl.assign_hard(xs, centers)
        with pytest.raises(ShapeMismatch):
            cl.encode(xs[:-1], centers, w)
        with pytest.raises(ShapeMismatch):
            cl.encode(xs, centers, w, zero_mask=np.zeros(3, dtype=bool))

    def test_block_permutation_equivariance(self):
        xs, centers = random_instance(9, n=15, k=4, d=3)
        perm = np.array([3, 0, 2, 1])
        enc = cl.encode(xs, centers, cl.soft_assignments(xs, centers, 2, 1.0))
        enc_p = cl.encode(
            xs, centers[perm], cl.soft_assignments(xs, centers[perm], 2, 1.0)
        )
        blocks = enc.vector.reshape(4, 3)
        blocks_p = enc_p.vector.reshape(4, 3)
        np.testing.assert_allclose(blocks_p, blocks[perm], atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), k=st.integers(1, 6), d=st.integers(1, 5))
    def test_encoding_length(self, seed, k, d):
        rng = np.random.default_rng(seed)
        xs = rng.normal(size=(10, d))
        centers = rng.normal(size=(k, d))
        enc = cl.encode(xs, centers, cl.assign_hard(xs, centers))
        assert enc.vector.size == k * d


class TestNormalization:
    def raw(self, values, blocks):
        return cl.Encoding(np.asarray(values, dtype=np.float64), state=RAW, blocks=blocks)

    def test_global_only(self):
        out = cl.normalize_encoding(self.raw([2.0, 1.0, 0.0, 0.0], 2), "global")
        np.testing.assert_allclose(out.vector, np.array([2, 1, 0, 0]) / np.sqrt(5), atol=1e-12)
        assert out.state == FULL

    def test_intra_then_global(self):
        out = cl.normalize_encoding(self.raw([2.0, 1.0, 0.0, 0.0], 2), "intra+global")
        np.testing.assert_allclose(
            out.vector, [2 / np.sqrt(5), 1 / np.sqrt(5), 0.0, 0.0], atol=1e-12
        )
        np.testing.assert_allclose(out.vector[:2], [0.8944271909999159, 0.4472135954999579])

    def test_zero_vector_stays_zero(self):
        out = cl.normalize_encoding(self.raw(np.zeros(6), 3))
        assert np.array_equal(out.vector, np.zeros(6))
        assert out.state == FULL

    def test_requires_raw_input(self):
        out = cl.normalize_encoding(self.raw([1.0, 0.0], 1))
        with pytest.raises(ValueError):
            cl.normalize_encoding(out)

    def test_unit_norm_after_full_normalization(self):
        rng = np.random.default_rng(11)
        out = cl.normalize_encoding(self.raw(rng.normal(size=12), 4))
        assert np.linalg.norm(out.vector) == pytest.approx(1.0, abs=1e-12)


class TestSimilarity:
    def full(self, values):
        v = np.asarray(values, dtype=np.float64)
        return cl.Encoding(v, state=FULL, blocks=1)

    def test_self_similarity_is_one(self):
        v = np.array([0.6, 0.8])
        assert cl.similarity(self.full(v), self.full(v)) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        assert cl.similarity(self.full([1.0, 0.0]), self.full([0.0, 1.0])) == 0.0

    def test_hand_value(self):
        assert cl.similarity(self.full([1.0, 0.0]), self.full([0.6, 0.8])) == pytest.approx(0.6)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cl.similarity(self.full([1.0, 0.0]), self.full([1.0, 0.0, 0.0]))

    def test_unnormalized_rejected(self):
        raw = cl.Encoding(np.array([1.0, 0.0]), state=RAW, blocks=1)
        with pytest.raises(NotNormalized):
            cl.similarity(raw, raw)


class TestEncodingDump:
    def test_roundtrip(self, tmp_path):
        enc = cl.Encoding(np.array([0.25, -1.5, 3.0]), state=RAW, blocks=1)
        path = tmp_path / "enc.venc"
        cl.store_encoding(enc, path)
        loaded = cl.load_encoding(path)
        np.testing.assert_array_equal(loaded, enc.vector.astype(np.float32))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "enc.venc"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(MalformedHeader):
            cl.load_encoding(path)
