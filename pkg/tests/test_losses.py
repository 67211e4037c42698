import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jdetrack.errors import DomainError
from jdetrack.losses import (
    EmbeddingBatch,
    LossNormWeighter,
    TaskLossSet,
    app_opt_weights,
    cross_entropy_loss,
    loss_norm_weights,
    optimal_log_vars,
    proxy_cross_entropy,
    softmax_form_loss,
    triplet_loss,
    uncertainty_total_loss,
    uniform_weights,
    upper_bound_loss,
    validate_app_opt,
    weighted_total_loss,
)


def dots_batch(pos, negs):
    """A batch whose anchor dot products are exactly the given numbers."""
    return EmbeddingBatch([1.0, 0.0], [[p, 0.3] for p in pos], [[n, -0.7] for n in negs])


def central_diff(fn, x, h=1e-5):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def unit_rows(rng, n, d):
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestTriplet:
    def test_all_hinges_inactive(self):
        assert triplet_loss(dots_batch([1.0], [0.5, -0.2])).value == 0.0

    def test_single_active(self):
        assert triplet_loss(dots_batch([0.2], [0.5])).value == pytest.approx(0.3, abs=1e-15)

    def test_hardest_positive(self):
        b = dots_batch([0.9, 0.2], [0.5])
        assert b.hardest_positive() == 1
        assert triplet_loss(b).value == pytest.approx(0.3, abs=1e-15)

    def test_sums_over_negatives(self):
        assert triplet_loss(dots_batch([0.2], [0.5, 0.4, -1.0])).value == pytest.approx(0.5)

    def test_empty_positives(self):
        with pytest.raises(DomainError):
            EmbeddingBatch([1.0, 0.0], np.zeros((0, 2)), [[1.0, 0.0]])

    def test_ignored_labels_dropped(self):
        emb = np.eye(5)
        b = EmbeddingBatch.from_labeled(emb, [3, 3, -1, 7, -1], anchor_index=0)
        assert len(b.positives) == 1 and len(b.negatives) == 1

    def test_gradient(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = unit_rows(rng, 6, 8)
            b = EmbeddingBatch(v[0], v[1:3], v[3:])
            g = triplet_loss(b)
            num = central_diff(lambda x: triplet_loss(EmbeddingBatch(x, b.positives, b.negatives)).value, b.anchor)
            np.testing.assert_allclose(g.d_anchor, num, atol=1e-7)


class TestUpperBound:
    def test_worked_value(self):
        v = upper_bound_loss(dots_batch([0.2], [0.5])).value
        assert v == pytest.approx(math.log1p(math.exp(0.3)), abs=1e-15)
        assert v == pytest.approx(0.854355, abs=1e-6)

    def test_no_overflow(self):
        v = upper_bound_loss(dots_batch([0.0], [750.0])).value
        assert math.isfinite(v) and v == pytest.approx(750.0)

    def test_positive(self):
        assert upper_bound_loss(dots_batch([5.0], [-5.0])).value > 0

    def test_identity_with_softmax_form(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            v = unit_rows(rng, 9, 16)
            b = EmbeddingBatch(v[0], v[1:3], v[3:])
            assert abs(upper_bound_loss(b).value - softmax_form_loss(b)) < 1e-12

    def test_equal_logits(self):
        assert softmax_form_loss(dots_batch([0.4], [0.4])) == pytest.approx(math.log(2), abs=1e-15)
        assert softmax_form_loss(dots_batch([0.2], [0.5])) == pytest.approx(0.854355, abs=1e-6)

    @settings(max_examples=200)
    @given(st.floats(-1, 1), st.lists(st.floats(-1, 1), min_size=1, max_size=8))
    def test_dominates_every_single_hinge(self, pos, negs):
        b = dots_batch([pos], negs)
        worst = max(max(0.0, n - pos) for n in negs)
        assert upper_bound_loss(b).value >= worst - 1e-12

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_dominates_triplet_with_one_negative(self, pos, neg):
        b = dots_batch([pos], [neg])
        assert upper_bound_loss(b).value >= triplet_loss(b).value

    def test_gradient(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = unit_rows(rng, 7, 8)
            b = EmbeddingBatch(v[0], v[1:3], v[3:])
            g = upper_bound_loss(b)

            def f_neg(x):
                return upper_bound_loss(EmbeddingBatch(b.anchor, b.positives, x.reshape(-1, 8))).value

            def f_anchor(x):
                return upper_bound_loss(EmbeddingBatch(x, b.positives, b.negatives)).value

            np.testing.assert_allclose(g.d_negatives.ravel(), central_diff(f_neg, b.negatives.ravel()), atol=1e-8)
            np.testing.assert_allclose(g.d_anchor, central_diff(f_anchor, b.anchor), atol=1e-8)


class TestCrossEntropy:
    def test_closed_form(self):
        v, _ = cross_entropy_loss([2.0, 0.0], 0)
        assert v == pytest.approx(math.log1p(math.exp(-2)), abs=1e-15)
        assert v == pytest.approx(0.126928, abs=1e-6)

    @pytest.mark.parametrize("c", [2, 5, 10])
    def test_uniform(self, c):
        v, g = cross_entropy_loss(np.full(c, 0.7), 1)
        assert v == pytest.approx(math.log(c), abs=1e-14)
        assert g.sum() == pytest.approx(0.0, abs=1e-15)

    def test_gradient_matches_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            z = rng.normal(size=6) * 2
            t = int(rng.integers(6))
            _, g = cross_entropy_loss(z, t)
            np.testing.assert_allclose(g, central_diff(lambda x: cross_entropy_loss(x, t)[0], z), atol=1e-8)

    def test_monotone_in_target_logit(self):
        values = [cross_entropy_loss([s, 0.3, -1.0], 0)[0] for s in np.linspace(-3, 3, 25)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_target_out_of_range(self):
        with pytest.raises(DomainError):
            cross_entropy_loss([1.0, 2.0], 2)

    def test_proxy_gradients(self):
        rng = np.random.default_rng(4)
        f, g = rng.normal(size=5), rng.normal(size=(4, 5))
        _, d_f, d_g = proxy_cross_entropy(f, g, 2)
        np.testing.assert_allclose(d_f, central_diff(lambda x: proxy_cross_entropy(x, g, 2)[0], f), atol=1e-8)
        num_g = central_diff(lambda x: proxy_cross_entropy(f, x.reshape(4, 5), 2)[0], g.ravel())
        np.testing.assert_allclose(d_g.ravel(), num_g, atol=1e-8)


class TestTaskWeighting:
    def test_single_term(self):
        assert weighted_total_loss([[3.0]], [[1.0]]) == 3.0

    def test_uniform_baseline(self):
        L = np.array([[1.0, 2.0, 3.0], [0.5, 0.25, 4.0]])
        assert weighted_total_loss(L, uniform_weights(2)) == pytest.approx(10.75)

    def test_two_heads_shared_weights(self):
        L = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        w = app_opt_weights(0.5, 2.0, 2)
        # 0.5*(1+2+4+5) + 2*(3+6)
        assert weighted_total_loss(L, w) == pytest.approx(24.0)
        validate_app_opt(w)

    def test_app_opt_validator(self):
        with pytest.raises(DomainError):
            validate_app_opt([[1.0, 0.5, 1.0]])
        with pytest.raises(DomainError):
            validate_app_opt([[1.0, 1.0, 1.0], [2.0, 2.0, 1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            weighted_total_loss([[1.0, 2.0]], [[1.0]])

    def test_negative_weight(self):
        with pytest.raises(DomainError):
            weighted_total_loss([[1.0]], [[-1.0]])

    def test_task_loss_set(self):
        s = TaskLossSet([[1.0, 2.0, 3.0]], weights=2.0)
        assert s.weights.shape == (1, 3)
        with pytest.raises(DomainError):
            TaskLossSet([[np.nan, 1.0, 1.0]])


class TestUncertainty:
    def test_plug_in(self):
        assert uncertainty_total_loss([[1.0]], [[0.0]])[0] == 0.5
        v, _ = uncertainty_total_loss([[2.0]], [[math.log(2)]])
        assert v == pytest.approx(0.5 * (1 + math.log(2)), abs=1e-15)
        assert v == pytest.approx(0.846574, abs=1e-6)

    def test_stationary_at_log_loss(self):
        L = np.array([[0.3, 2.0, 17.0]])
        s, best = optimal_log_vars(L)
        value, grad = uncertainty_total_loss(L, s)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)
        assert value == pytest.approx(best.sum(), abs=1e-12)

    def test_gradient_formula(self):
        L, s = np.array([[1.5, 0.2]]), np.array([[0.3, -1.0]])
        _, g = uncertainty_total_loss(L, s)
        num = central_diff(lambda x: uncertainty_total_loss(L, x.reshape(1, 2))[0], s.ravel())
        np.testing.assert_allclose(g.ravel(), num, atol=1e-9)

    def test_minimum_is_global(self):
        from scipy.optimize import minimize_scalar

        for L in (0.05, 1.0, 42.0):
            res = minimize_scalar(lambda s: 0.5 * (math.exp(-s) * L + s), bracket=(-5, 5), tol=1e-12)
            assert res.fun == pytest.approx(0.5 * (1 + math.log(L)), abs=1e-9)


class TestLossNorm:
    def test_reciprocal(self):
        assert loss_norm_weights([2.0])[0] == 0.5
        np.testing.assert_array_equal(loss_norm_weights([2.0, 4.0]), [0.5, 0.25])
        w = loss_norm_weights([3.0, 3.0, 3.0])
        assert w[0] == w[1] == w[2]

    def test_zero_average(self):
        with pytest.raises(DomainError):
            loss_norm_weights([1.0, 0.0])

    def test_moving_average(self):
        wt = LossNormWeighter(momentum=0.5)
        wt.update([2.0, 4.0])
        np.testing.assert_allclose(wt.weights(), [0.5, 0.25])
        wt.update([4.0, 4.0])
        np.testing.assert_allclose(wt.averages, [3.0, 4.0])
