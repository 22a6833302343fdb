import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entroprobe.errors import InvalidInputError, ShapeError
from entroprobe.numerics import (
    entropy_bits,
    entropy_bits_from_logits,
    entropy_top1,
    gelu,
    inject_fault,
    layer_norm,
    log_softmax,
    matmul,
    softmax,
)

LOG2_50257 = 15.6170369342877417877807766936  # mpmath, 30 digits
GELU_1 = 0.841191990608276704781995777045  # mpmath, 30 digits
GELU_M2 = -0.0454023059122249812189586138493


def naive_entropy(z):
    z = np.asarray(z, dtype=np.float64)
    p = np.exp(z - z.max())
    p /= p.sum()
    nz = p[p > 0]
    return float(np.sum(nz * np.log2(1.0 / nz)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0, 0, 0, 0]), [0.25] * 4)

    @pytest.mark.parametrize("c", [-7.0, 0.0, 3.5, 250.0])
    def test_odds_ratio(self, c):
        np.testing.assert_allclose(softmax([c, c + math.log(3)]), [0.25, 0.75], atol=1e-12)

    def test_no_overflow(self):
        p = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0, abs=1e-300)

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0], [-np.inf]])
    def test_non_finite(self, bad):
        with pytest.raises(InvalidInputError):
            softmax(bad)

    def test_float32_preserved(self):
        assert softmax(np.zeros(5, dtype=np.float32)).dtype == np.float32

    def test_fault_hook_breaks_stabilization(self):
        with inject_fault("softmax-stabilization"):
            assert not np.all(np.isfinite(softmax([1000.0, 0.0])))
        assert np.all(np.isfinite(softmax([1000.0, 0.0])))

    def test_log_softmax_matches(self):
        z = np.random.default_rng(0).normal(size=20)
        np.testing.assert_allclose(np.exp(log_softmax(z)), softmax(z), rtol=1e-12)

    @given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e4, 1e4)))
    def test_sums_to_one(self, z):
        p = softmax(z)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-6

    @given(
        arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)),
        st.floats(-1e3, 1e3),
    )
    def test_shift_invariance(self, z, c):
        np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-6)


def test_argmax_preserved_on_seeded_vectors():
    rng = np.random.default_rng(3)
    for _ in range(500):
        z = rng.normal(0, 5, size=int(rng.integers(1, 100)))
        if rng.random() < 0.3:  # plant ties
            z[rng.integers(0, z.size)] = z.max()
        assert int(np.argmax(softmax(z))) == int(np.argmax(z))


class TestEntropy:
    def test_delta(self):
        assert entropy_bits([1.0, 0.0, 0.0]) == 0.0

    def test_dyadic(self):
        assert entropy_bits([0.5, 0.25, 0.25]) == 1.5

    def test_uniform_gpt2_vocab(self):
        m = 50257
        assert entropy_bits(np.full(m, 1.0 / m)) == pytest.approx(LOG2_50257, abs=1e-9)
        assert entropy_bits_from_logits(np.zeros(m)) == pytest.approx(LOG2_50257, abs=1e-9)

    def test_negative_rejected(self):
        with pytest.raises(InvalidInputError):
            entropy_bits([1.2, -0.2])

    def test_fused_small_cases(self):
        assert entropy_bits_from_logits([0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
        assert entropy_bits_from_logits([5, 5, 5, 5]) == pytest.approx(2.0, abs=1e-12)

    def test_fused_non_finite(self):
        with pytest.raises(InvalidInputError):
            entropy_bits_from_logits([0.0, np.nan])

    def test_fused_matches_naive_16(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            z = rng.normal(0, 4, size=16)
            assert entropy_bits_from_logits(z) == pytest.approx(naive_entropy(z), abs=1e-9)

    def test_fused_survives_extreme_spread(self):
        # the naive p*log p route loses tiny probabilities here; the fused one stays exact
        z = np.array([0.0, -800.0, -800.0])
        assert entropy_bits_from_logits(z) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=200)
    @given(arrays(np.float64, st.integers(1, 50), elements=st.floats(0, 1)))
    def test_bounds(self, w):
        if w.sum() <= 0:
            return
        p = w / w.sum()
        h = entropy_bits(p)
        assert -1e-12 <= h <= math.log2(p.size) + 1e-9

    def test_batched_rows(self):
        rng = np.random.default_rng(5)
        z = rng.normal(0, 2, size=(7, 33)).astype(np.float32)
        ent, top = entropy_top1(z)
        for r in range(7):
            assert ent[r] == pytest.approx(naive_entropy(z[r]), abs=1e-9)
            assert top[r] == np.argmax(z[r])

    def test_batched_tie_break(self):
        ent, top = entropy_top1(np.zeros((2, 5), dtype=np.float32))
        assert top.tolist() == [0, 0]
        np.testing.assert_allclose(ent, math.log2(5))

    def test_batched_shape(self):
        with pytest.raises(ShapeError):
            entropy_top1(np.zeros(4))


class TestLayerNorm:
    def test_two_values(self):
        out = layer_norm([1.0, -1.0], 1.0, 0.0, 1e-5)
        expect = 0.999995000037499687502734350391  # 1/sqrt(1 + 1e-5)
        np.testing.assert_allclose(out, [expect, -expect], rtol=1e-12)

    @pytest.mark.parametrize("c", [0.1, -3.7, 1e6, 0.0])
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_constant_collapses_to_shift(self, c, dtype):
        shift = np.array([0.5, -1.0, 2.0], dtype=dtype)
        out = layer_norm(np.full(3, c, dtype=dtype), np.ones(3, dtype=dtype), shift, 1e-5)
        assert np.array_equal(out, shift)

    def test_affine(self):
        out = layer_norm([3.0, 1.0], [2.0, 2.0], [1.0, 1.0], 1e-12)
        np.testing.assert_allclose(out, [3.0, -1.0], atol=1e-9)

    def test_statistics(self):
        rng = np.random.default_rng(9)
        x = rng.normal(4, 3, size=(50, 64))
        out = layer_norm(x, 1.0, 0.0, 1e-5)
        assert np.all(np.abs(out.mean(axis=1)) <= 1e-6)
        assert np.all(np.abs(out.var(axis=1) - 1) <= 1e-4)

    def test_bad_eps(self):
        with pytest.raises(InvalidInputError):
            layer_norm([1.0, 2.0], 1.0, 0.0, 0.0)


class TestGelu:
    def test_zero(self):
        assert gelu(0.0) == 0.0

    def test_reference_values(self):
        assert gelu(1.0) == pytest.approx(GELU_1, abs=1e-12)
        assert gelu(-2.0) == pytest.approx(GELU_M2, abs=1e-12)

    def test_asymptotes(self):
        assert gelu(20.0) == pytest.approx(20.0)
        assert gelu(-20.0) == pytest.approx(0.0, abs=1e-12)

    def test_array_dtype(self):
        out = gelu(np.array([1.0, 0.0], dtype=np.float32))
        assert out.dtype == np.float32
        assert out[0] == pytest.approx(GELU_1, abs=1e-6)


class TestMatmul:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(matmul(np.eye(3), b), b)

    def test_zero(self):
        assert not matmul(np.ones((2, 3)), np.zeros((3, 4))).any()

    def test_hand(self):
        assert matmul([[1, 2], [3, 4]], [[5], [6]]).tolist() == [[17], [39]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_repeatable(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(40, 768)).astype(np.float32)
        b = rng.normal(size=(768, 300)).astype(np.float32)
        assert np.array_equal(matmul(a, b), matmul(a, b))
