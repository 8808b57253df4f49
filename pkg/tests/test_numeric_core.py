"""Tests for the tensor engine: layers, gradients, optimizer."""

import numpy as np
import pytest

from gridpointer import autograd as ag
from gridpointer.errors import ConfigurationError, DimensionError
from gridpointer.gradcheck import grad_check
from gridpointer.layers import (
    LayerParams,
    conv3x3_params,
    conv_apply,
    dense_apply,
    dense_params,
    dropout,
    lstm_params,
    lstm_step,
    pointwise,
)
from gridpointer.optim import OptimizerState, optimizer_step


def make_params(w, b):
    return LayerParams(weight=ag.parameter(np.asarray(w, dtype=np.float64)),
                       bias=ag.parameter(np.asarray(b, dtype=np.float64)))


class TestDense:
    def test_identity(self):
        p = make_params(np.eye(3), np.zeros(3))
        y = dense_apply(ag.constant([1.0, 2.0, 3.0]), p)
        np.testing.assert_array_equal(y.data, [1.0, 2.0, 3.0])

    def test_bias_only(self):
        p = make_params(np.zeros((3, 1)), [0.5])
        y = dense_apply(ag.constant([9.0, -2.0, 4.0]), p)
        np.testing.assert_array_equal(y.data, [0.5])

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(7)
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(3)
        x = rng.standard_normal(4)
        y = dense_apply(ag.constant(x), make_params(w, b))
        for j in range(3):
            expected = b[j]
            for i in range(4):
                expected += x[i] * w[i, j]
            assert y.data[j] == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch_names_both(self):
        p = make_params(np.zeros((4, 3)), np.zeros(3))
        with pytest.raises(DimensionError, match="5.*4|4.*5"):
            dense_apply(ag.constant(np.zeros(5)), p)


class TestConv:
    def test_k1_equals_per_cell_dense(self):
        rng = np.random.default_rng(0)
        p = make_params(rng.standard_normal((3, 2)), rng.standard_normal(2))
        x = rng.standard_normal((2, 2, 3))
        y = conv_apply(ag.constant(x), p, k=1)
        for r in range(2):
            for c in range(2):
                cell = dense_apply(ag.constant(x[r, c]), p)
                np.testing.assert_array_equal(y.data[r, c], cell.data)

    def test_k3_zero_weights_bias_everywhere(self):
        p = make_params(np.zeros((3, 3, 2, 1)), [0.25])
        y = conv_apply(ag.constant(np.random.default_rng(1).standard_normal((4, 4, 2))), p, k=3)
        np.testing.assert_array_equal(y.data, np.full((4, 4, 1), 0.25))

    def test_k3_matches_naive_loops(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((5, 5, 2))
        w = rng.standard_normal((3, 3, 2, 3))
        b = rng.standard_normal(3)
        y = conv_apply(ag.constant(x), make_params(w, b), k=3)
        for yy in range(5):
            for xx in range(5):
                for co in range(3):
                    acc = b[co]
                    for dy in range(3):
                        for dx in range(3):
                            for ci in range(2):
                                sy, sx = yy + dy - 1, xx + dx - 1
                                if 0 <= sy < 5 and 0 <= sx < 5:
                                    acc += x[sy, sx, ci] * w[dy, dx, ci, co]
                    assert y.data[yy, xx, co] == pytest.approx(acc, rel=1e-10)

    def test_unsupported_kernel(self):
        p = make_params(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ConfigurationError):
            conv_apply(ag.constant(np.zeros((3, 3, 2))), p, k=5)


class TestPointwise:
    def test_sigmoid_zero(self):
        assert pointwise(ag.constant(0.0), "sigmoid").data == pytest.approx(0.5)

    def test_tanh_zero(self):
        assert pointwise(ag.constant(0.0), "tanh").data == pytest.approx(0.0)

    def test_sigmoid_symmetry(self):
        x = np.random.default_rng(2).standard_normal(100) * 5
        s = pointwise(ag.constant(x), "sigmoid").data
        s_neg = pointwise(ag.constant(-x), "sigmoid").data
        np.testing.assert_allclose(s + s_neg, np.ones(100), atol=1e-12)

    def test_sigmoid_strictly_in_unit_interval(self):
        x = np.array([-40.0, -1.0, 0.0, 1.0, 40.0])
        s = pointwise(ag.constant(x), "sigmoid").data
        assert np.all(s > 0.0) and np.all(s < 1.0)


class TestDropout:
    def test_eval_identity(self):
        x = np.random.default_rng(3).standard_normal(50)
        y = dropout(ag.constant(x), 0.9, "eval")
        np.testing.assert_array_equal(y.data, x)

    def test_rate_zero_identity(self):
        x = np.random.default_rng(3).standard_normal(50)
        y = dropout(ag.constant(x), 0.0, "train", np.random.default_rng(0))
        np.testing.assert_array_equal(y.data, x)

    def test_zero_fraction(self):
        rng = np.random.default_rng(123)
        x = np.ones(100_000)
        y = dropout(ag.constant(x), 0.5, "train", rng)
        frac = float(np.mean(y.data == 0.0))
        assert abs(frac - 0.5) < 0.01
        # survivors are scaled by 1 / (1 - rate)
        assert np.all(y.data[y.data != 0.0] == 2.0)

    def test_rate_one_rejected(self):
        with pytest.raises(ConfigurationError):
            dropout(ag.constant(np.zeros(3)), 1.0, "train", np.random.default_rng(0))


class TestLstmStep:
    def test_zero_params_analytic(self):
        hid = 4
        p = make_params(np.zeros((2 + hid, 4 * hid)), np.zeros(4 * hid))
        c0 = np.array([1.0, -2.0, 0.5, 3.0])
        h, c = lstm_step(ag.constant(np.zeros(2)), ag.constant(np.zeros(hid)),
                         ag.constant(c0), p)
        np.testing.assert_allclose(c.data, 0.5 * c0, atol=1e-12)
        np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * c0), atol=1e-12)

    def test_all_zero(self):
        hid = 3
        p = make_params(np.zeros((1 + hid, 4 * hid)), np.zeros(4 * hid))
        h, c = lstm_step(ag.constant(np.zeros(1)), ag.constant(np.zeros(hid)),
                         ag.constant(np.zeros(hid)), p)
        np.testing.assert_array_equal(h.data, np.zeros(hid))
        np.testing.assert_array_equal(c.data, np.zeros(hid))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        hid, emb = 4, 3
        w = rng.standard_normal((emb + hid, 4 * hid))
        b = rng.standard_normal(4 * hid)
        x = rng.standard_normal(emb)
        h_prev = rng.standard_normal(hid)
        c_prev = rng.standard_normal(hid)
        h, c = lstm_step(ag.constant(x), ag.constant(h_prev), ag.constant(c_prev),
                         make_params(w, b))

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        xin = np.concatenate([x, h_prev])
        for j in range(hid):
            zi = b[j] + sum(xin[i] * w[i, j] for i in range(emb + hid))
            zf = b[hid + j] + sum(xin[i] * w[i, hid + j] for i in range(emb + hid))
            zg = b[2 * hid + j] + sum(xin[i] * w[i, 2 * hid + j] for i in range(emb + hid))
            zo = b[3 * hid + j] + sum(xin[i] * w[i, 3 * hid + j] for i in range(emb + hid))
            cj = sig(zf) * c_prev[j] + sig(zi) * np.tanh(zg)
            hj = sig(zo) * np.tanh(cj)
            assert c.data[j] == pytest.approx(cj, rel=1e-10)
            assert h.data[j] == pytest.approx(hj, rel=1e-10)

    def test_shape_mismatch(self):
        p = make_params(np.zeros((5, 8)), np.zeros(8))
        with pytest.raises(DimensionError):
            lstm_step(ag.constant(np.zeros(1)), ag.constant(np.zeros(2)),
                      ag.constant(np.zeros(3)), p)


class TestGradCheck:
    def test_quadratic(self):
        w = ag.parameter(np.array([1.0, -2.0, 0.5]))
        err = grad_check(lambda: ag.tensor_sum(ag.mul(w, w)), [w])
        assert err <= 1e-8

    def test_detects_sign_flip(self):
        w = ag.parameter(np.array([1.0, -2.0, 0.5]))

        def bad_loss():
            out = ag.tensor_sum(ag.mul(w, w))
            good = out._backward

            def flipped(g):
                good(-g)

            out._backward = flipped
            return out

        assert grad_check(bad_loss, [w]) >= 0.1

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_layer_gradients(self, seed):
        rng = np.random.default_rng(seed)
        p = dense_params(4, 3, rng, np.float64)
        x = ag.constant(rng.standard_normal((5, 4)))
        err = grad_check(lambda: ag.tensor_sum(ag.tanh(dense_apply(x, p))),
                         [p.weight, p.bias])
        assert err <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_conv3_layer_gradients(self, seed):
        rng = np.random.default_rng(seed)
        p = conv3x3_params(2, 3, rng, np.float64)
        x = ag.constant(rng.standard_normal((4, 4, 2)))
        err = grad_check(lambda: ag.tensor_sum(ag.tanh(conv_apply(x, p, 3))),
                         [p.weight, p.bias])
        assert err <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_lstm_layer_gradients(self, seed):
        rng = np.random.default_rng(seed)
        p = lstm_params(3, 4, rng, np.float64)
        x = ag.constant(rng.standard_normal(3))
        h0 = ag.constant(np.zeros(4))
        c0 = ag.constant(np.zeros(4))

        def loss():
            h, c = lstm_step(x, h0, c0, p)
            h, c = lstm_step(x, h, c, p)
            return ag.tensor_sum(ag.mul(h, h)) + ag.tensor_sum(ag.mul(c, c))

        assert grad_check(loss, [p.weight, p.bias]) <= 1e-4


class TestOptimizer:
    def test_zero_gradients_leave_params(self):
        w = ag.parameter(np.array([1.0, 2.0], dtype=np.float32))
        state = OptimizerState(lr=0.1)
        optimizer_step([("w", w)], state)
        np.testing.assert_array_equal(w.data, [1.0, 2.0])

    def test_constant_gradient_sign_direction(self):
        w = ag.parameter(np.array([0.0], dtype=np.float64))
        state = OptimizerState(lr=0.01)
        for _ in range(200):
            w.grad = np.array([3.0])
            optimizer_step([("w", w)], state)
        # steady-state step magnitude approaches -lr * sign(g)
        assert w.data[0] == pytest.approx(-200 * 0.01, rel=0.05)

    def test_single_step_magnitude(self):
        w = ag.parameter(np.array([1.0], dtype=np.float64))
        state = OptimizerState(lr=0.1)
        w.grad = np.array([1.0])
        optimizer_step([("w", w)], state)
        assert w.data[0] == pytest.approx(1.0 - 0.1, abs=1e-6)
        assert w.grad is None

    def test_step_counter_increases(self):
        w = ag.parameter(np.zeros(1))
        state = OptimizerState()
        for expected in (1, 2, 3):
            optimizer_step([("w", w)], state)
            assert state.step_count == expected


class TestInvariants:
    def test_conv1_bit_identical_to_mapped_dense(self):
        rng = np.random.default_rng(9)
        p = dense_params(6, 4, rng, np.float32)
        x = rng.standard_normal((7, 7, 6)).astype(np.float32)
        y = conv_apply(ag.constant(x), p, 1)
        rows = np.stack([
            np.stack([dense_apply(ag.constant(x[r, c]), p).data for c in range(7)])
            for r in range(7)
        ])
        assert np.array_equal(y.data, rows)

    def test_outputs_finite_for_bounded_inputs(self):
        rng = np.random.default_rng(4)
        p = dense_params(8, 8, rng, np.float32)
        x = ag.constant(rng.uniform(-1e3, 1e3, size=(5, 8)).astype(np.float32))
        y = pointwise(dense_apply(x, p), "tanh")
        assert np.all(np.isfinite(y.data))

    def test_determinism_same_seed_bit_identical(self):
        def run():
            rng = np.random.default_rng(55)
            p = dense_params(6, 3, rng, np.float32)
            x = ag.constant(rng.standard_normal((4, 6)).astype(np.float32))
            return pointwise(dense_apply(x, p), "sigmoid").data

        assert np.array_equal(run(), run())
