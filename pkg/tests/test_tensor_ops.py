"""Dense-op checks against scalar-loop oracles plus validation behavior."""

import numpy as np
import pytest

from proxycam import (
    DegenerateInputError,
    InvariantViolationError,
    ShapeError,
    bilinear_upsample,
    dot,
    l2_normalize,
    matvec,
    relu,
    spatial_mean,
)
from proxycam.tensor_ops import as_tensor

from oracles import bilinear_loop, dot_loop, matvec_loop, spatial_mean_loop


class TestAsTensor:
    def test_converts_lists_to_c_order_float64(self):
        t = as_tensor([[1, 2], [3, 4]], rank=2)
        assert t.dtype == np.float64
        assert t.flags["C_CONTIGUOUS"]

    def test_rank_mismatch(self):
        with pytest.raises(ShapeError):
            as_tensor(np.zeros((2, 2)), rank=1)

    def test_rejects_non_finite(self):
        with pytest.raises(InvariantViolationError):
            as_tensor([1.0, np.nan])
        with pytest.raises(InvariantViolationError):
            as_tensor([np.inf, 0.0])


class TestDot:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(1, 64)
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            np.testing.assert_allclose(dot(a, b), dot_loop(a, b), rtol=1e-12, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            dot(np.zeros(3), np.zeros(4))

    def test_rank_enforced(self):
        with pytest.raises(ShapeError):
            dot(np.zeros((2, 2)), np.zeros((2, 2)))


class TestL2Normalize:
    def test_unit_norm_and_direction(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = rng.normal(size=rng.integers(1, 50))
            if np.linalg.norm(v) == 0.0:
                continue
            u = l2_normalize(v)
            assert abs(np.linalg.norm(u) - 1.0) < 1e-12
            np.testing.assert_allclose(u, v / np.linalg.norm(v), rtol=0, atol=1e-15)

    def test_three_four_five(self):
        np.testing.assert_array_equal(l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_zero_vector_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            l2_normalize(np.zeros(4))


class TestSpatialMean:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            t = rng.normal(size=(rng.integers(1, 8), rng.integers(1, 9), rng.integers(1, 9)))
            np.testing.assert_allclose(
                spatial_mean(t), spatial_mean_loop(t), rtol=1e-12, atol=1e-12
            )

    def test_requires_rank_3(self):
        with pytest.raises(ShapeError):
            spatial_mean(np.zeros((2, 2)))


class TestMatvec:
    def test_matches_loop_oracle_both_ways(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            rows, cols = rng.integers(1, 20, size=2)
            w = rng.normal(size=(rows, cols))
            v = rng.normal(size=cols)
            np.testing.assert_allclose(matvec(w, v), matvec_loop(w, v), rtol=1e-12, atol=1e-12)
            u = rng.normal(size=rows)
            np.testing.assert_allclose(
                matvec(w, u, transpose=True), matvec_loop(w, u, transpose=True),
                rtol=1e-12, atol=1e-12,
            )

    def test_inner_dim_mismatch(self):
        with pytest.raises(ShapeError):
            matvec(np.zeros((3, 4)), np.zeros(3))
        with pytest.raises(ShapeError):
            matvec(np.zeros((3, 4)), np.zeros(4), transpose=True)


class TestRelu:
    def test_elementwise(self):
        rng = np.random.default_rng(4)
        t = rng.normal(size=(3, 5, 5))
        out = relu(t)
        assert out.min() >= 0.0
        np.testing.assert_array_equal(out, np.where(t > 0, t, 0.0))


class TestBilinearUpsample:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            src = rng.normal(size=(rng.integers(1, 9), rng.integers(1, 9)))
            th = int(rng.integers(src.shape[0], 24))
            tw = int(rng.integers(src.shape[1], 24))
            np.testing.assert_allclose(
                bilinear_upsample(src, th, tw), bilinear_loop(src, th, tw),
                rtol=1e-12, atol=1e-12,
            )

    def test_identity_when_same_size(self):
        rng = np.random.default_rng(6)
        src = rng.normal(size=(5, 7))
        np.testing.assert_array_equal(bilinear_upsample(src, 5, 7), src)

    def test_corners_preserved_exactly(self):
        rng = np.random.default_rng(7)
        src = rng.normal(size=(4, 6))
        out = bilinear_upsample(src, 13, 17)
        assert out[0, 0] == src[0, 0]
        assert out[0, -1] == src[0, -1]
        assert out[-1, 0] == src[-1, 0]
        assert out[-1, -1] == src[-1, -1]

    def test_output_stays_within_input_bounds(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            src = rng.uniform(-5, 5, size=(rng.integers(1, 6), rng.integers(1, 6)))
            out = bilinear_upsample(src, 16, 16)
            assert out.min() >= src.min() - 1e-12
            assert out.max() <= src.max() + 1e-12

    def test_single_cell_broadcasts(self):
        out = bilinear_upsample(np.array([[2.5]]), 4, 4)
        np.testing.assert_array_equal(out, np.full((4, 4), 2.5))

    def test_rejects_downsampling(self):
        with pytest.raises(ShapeError):
            bilinear_upsample(np.zeros((4, 4)), 3, 8)
