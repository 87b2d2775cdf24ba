import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hopgag import AttentionBatch, GuidanceParams, InvalidInputError
from hopgag.attention import attention, attention_weights, gag_attention, pladis_extrapolate
from hopgag.fixed_point import gag_step, hopfield_operator
from hopgag.hopfield import HopfieldConfig, retrieve


def random_batch(rng, n=5, m=6, d=4, dv=3):
    return AttentionBatch(rng.normal(size=(n, d)), rng.normal(size=(m, d)), rng.normal(size=(m, dv)))


class TestBatch:
    def test_shape_checks(self):
        with pytest.raises(InvalidInputError):
            AttentionBatch(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 1)))
        with pytest.raises(InvalidInputError):
            AttentionBatch(np.ones((2, 3)), np.ones((4, 3)), np.ones((5, 1)))
        with pytest.raises(InvalidInputError):
            AttentionBatch(np.ones((2, 3)), np.full((4, 3), np.nan), np.ones((4, 1)))

    def test_scale(self):
        assert AttentionBatch(np.ones((1, 9)), np.ones((2, 9)), np.ones((2, 1))).scale == pytest.approx(1 / 3)


class TestAttention:
    @pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
    def test_single_key(self, alpha):
        rng = np.random.default_rng(0)
        batch = AttentionBatch(rng.normal(size=(4, 3)), rng.normal(size=(1, 3)), [[2.0, -1.0]])
        assert_allclose(attention(batch, alpha).rows, np.tile([2.0, -1.0], (4, 1)), atol=1e-15)

    @pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
    def test_matches_retrieval(self, alpha):
        rng = np.random.default_rng(1)
        xi = rng.normal(size=(5, 7))
        x = rng.normal(size=5)
        out = attention(AttentionBatch(x[None, :], xi.T, xi.T), alpha).rows[0]
        assert_allclose(out, retrieve(x, xi, HopfieldConfig(alpha)), atol=1e-12)

    def test_dominant_logit_with_sparsemax(self):
        K = np.eye(4)
        Q = np.array([[0.0, 4.1, 0.0, 0.0]])  # scaled gap 2.05 > 1 leaves a singleton support
        V = np.arange(8.0).reshape(4, 2)
        assert_array_equal(attention(AttentionBatch(Q, K, V), 2.0).rows[0], V[1])

    def test_weights_on_simplex_and_convex_hull(self):
        rng = np.random.default_rng(2)
        for alpha in (1.0, 1.5, 2.0):
            batch = random_batch(rng)
            w = attention_weights(batch, alpha)
            assert np.all(w >= 0)
            assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
            rows = attention(batch, alpha).rows
            assert np.all(np.linalg.norm(rows, axis=1) <= np.linalg.norm(batch.V, axis=1).max() + 1e-12)

    def test_accepts_tuples(self):
        rng = np.random.default_rng(3)
        b = random_batch(rng)
        assert_array_equal(attention((b.Q, b.K, b.V)).rows, attention(b).rows)


class TestExtrapolation:
    def test_lambda_zero(self):
        b = random_batch(np.random.default_rng(4))
        assert_array_equal(pladis_extrapolate(b, 1.5, 0.0).rows, attention(b, 1.5).rows)

    def test_single_key_ignores_lambda(self):
        rng = np.random.default_rng(5)
        b = AttentionBatch(rng.normal(size=(3, 2)), rng.normal(size=(1, 2)), rng.normal(size=(1, 2)))
        assert_allclose(pladis_extrapolate(b, 2.0, 7.0).rows, attention(b, 2.0).rows, atol=1e-14)

    def test_hand_example(self):
        b = AttentionBatch([[2.0]], [[1.0], [0.0]], [[1.0], [0.0]])
        dense = math.e**2 / (math.e**2 + 1)
        out = pladis_extrapolate(b, 2.0, 1.0).rows[0, 0]
        assert out == pytest.approx(1.0 + (1.0 - dense), abs=1e-14)
        assert out == pytest.approx(1.1192, abs=1e-4)


class TestGuidedAttention:
    def test_reduces_to_extrapolation(self):
        b = random_batch(np.random.default_rng(6))
        params = GuidanceParams(lam=3.0, zeta=1.0, eta=math.inf, alpha=1.5)
        assert_array_equal(gag_attention(b, params).rows, pladis_extrapolate(b, 1.5, 3.0).rows)

    def test_lambda_zero_is_sparse(self):
        b = random_batch(np.random.default_rng(7))
        assert_array_equal(gag_attention(b, GuidanceParams(lam=0.0, alpha=2.0)).rows, attention(b, 2.0).rows)

    def test_lambda_zero_alpha_one_is_softmax_attention(self):
        b = random_batch(np.random.default_rng(8))
        out = gag_attention(b, GuidanceParams(lam=0.0, alpha=1.0)).rows
        assert_allclose(out, attention(b, 1.0).rows, atol=0)

    def test_rows_match_gag_step(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            d = int(rng.integers(1, 6))
            xi = rng.normal(size=(d, 5))
            Q = rng.normal(size=(4, d))
            params = GuidanceParams(lam=rng.uniform(0, 12), zeta=rng.uniform(), eta=rng.uniform(0.5, 20))
            out = gag_attention(AttentionBatch(Q, xi.T, xi.T), params).rows
            Ts = hopfield_operator(xi, params.alpha)
            Td = hopfield_operator(xi, 1.0)
            for q, row in zip(Q, out):
                assert_allclose(row, gag_step(Ts, Td, q, params), atol=1e-10)

    def test_ceiling_per_row(self):
        rng = np.random.default_rng(10)
        b = random_batch(rng, dv=4)
        params = GuidanceParams(lam=5.0, zeta=0.3, eta=0.01)
        diff = gag_attention(b, params).rows - attention(b, params.alpha).rows
        assert np.all(np.linalg.norm(diff, axis=1) <= 5.0 * 0.01 * (1 + 1e-12))

    def test_rows_with_zero_residual_unchanged(self):
        # identical keys make sparse and dense weights both uniform
        K = np.ones((3, 2))
        V = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        b = AttentionBatch([[0.3, 0.7], [1.0, -1.0]], K, V)
        assert_allclose(gag_attention(b).rows, attention(b, 1.5).rows, atol=1e-15)

    def test_row_independence(self):
        rng = np.random.default_rng(11)
        b = random_batch(rng, n=6)
        full = gag_attention(b).rows
        for i in range(6):
            single = gag_attention(AttentionBatch(b.Q[i : i + 1], b.K, b.V)).rows[0]
            assert_array_equal(single, full[i])
