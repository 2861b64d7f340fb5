"""Engine tests: every differentiable op against central finite
differences, plus the documented edge-case behaviors.

Gradient checks use a random linear functional of the op output so the
analytic backward sees an arbitrary upstream gradient while the objective
stays numerically well conditioned. Inputs for the kinked ops (ReLU, max
pool) are shuffled linspace values, which keeps every element and every
within-patch gap far wider than the finite-difference step.
"""

import numpy as np
import pytest

from artifact.nn import (BNParams, ConvParams, batch_norm,
                         batch_norm_backward, concat_channels,
                         concat_channels_backward, conv2d, conv2d_backward,
                         max_pool_2x2, max_pool_2x2_backward,
                         max_relative_error, mse_loss, numerical_gradient,
                         relu, relu_backward, sgd_momentum_step, unpool_2x2,
                         unpool_2x2_backward, xavier_init)

N_SEEDS = 20
TOL = 1e-5


def spread_values(shape, seed):
    """Shuffled half-offset grid over (-1, 1): distinct, well separated,
    zero can never occur."""
    n = int(np.prod(shape))
    vals = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    np.random.default_rng(seed).shuffle(vals)
    return vals.reshape(shape)


class TestConv2d:
    def test_identity_1x1_kernel(self):
        p = ConvParams(np.ones((1, 1, 1, 1)), np.zeros(1))
        x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
        out, _ = conv2d(x, p)
        assert np.array_equal(out, x)

    def test_zero_weights_constant_bias(self):
        p = ConvParams(np.zeros((3, 3, 2, 3)), np.full(3, 2.5))
        x = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
        out, _ = conv2d(x, p)
        assert np.allclose(out, 2.5)

    def test_preserves_spatial_dims(self):
        x = np.zeros((2, 3, 10, 6))
        for k in (1, 3):
            p = xavier_init((k, k, 3, 4), seed=0, dtype=np.float64)
            out, _ = conv2d(x, p)
            assert out.shape == (2, 4, 10, 6)

    def test_rejects_channel_mismatch(self):
        p = xavier_init((3, 3, 2, 3), seed=0)
        with pytest.raises(ValueError, match="channels"):
            conv2d(np.zeros((1, 5, 4, 4)), p)

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        k = 3 if seed % 2 == 0 else 1
        x = rng.normal(size=(1, 2, 6, 6))
        p = xavier_init((k, k, 2, 3), seed=seed + 500, dtype=np.float64)
        p.bias[:] = rng.normal(size=3)
        out, cache = conv2d(x, p)
        w = rng.normal(size=out.shape)
        dx, dw, db = conv2d_backward(w, cache)
        assert max_relative_error(dx, numerical_gradient(
            lambda v: float(np.sum(conv2d(v, p)[0] * w)), x.copy())) < TOL
        assert max_relative_error(dw, numerical_gradient(
            lambda v: float(np.sum(conv2d(x, ConvParams(v, p.bias))[0] * w)),
            p.weights.copy())) < TOL
        assert max_relative_error(db, numerical_gradient(
            lambda v: float(np.sum(conv2d(x, ConvParams(p.weights, v))[0] * w)),
            p.bias.copy())) < TOL


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        x = np.random.default_rng(0).normal(2.0, 3.0, size=(4, 3, 8, 8))
        out, _ = batch_norm(x, BNParams(np.ones(3), np.zeros(3)), "train")
        assert np.max(np.abs(out.mean(axis=(0, 2, 3)))) < 1e-5
        assert np.max(np.abs(out.var(axis=(0, 2, 3)) - 1.0)) < 1e-4

    def test_affine_parameters(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(8, 2, 16, 16))
        out, _ = batch_norm(x, BNParams(np.full(2, 2.0), np.full(2, 3.0)), "train")
        assert np.max(np.abs(out.mean(axis=(0, 2, 3)) - 3.0)) < 1e-4
        assert np.max(np.abs(out.var(axis=(0, 2, 3)) - 4.0)) < 1e-3

    def test_running_stats_and_infer_mode(self):
        rng = np.random.default_rng(2)
        p = BNParams(np.ones(2), np.zeros(2))
        for _ in range(200):
            batch_norm(rng.normal(1.0, 2.0, size=(4, 2, 8, 8)), p, "train")
        assert np.allclose(p.running_mean, 1.0, atol=0.1)
        assert np.allclose(p.running_var, 4.0, atol=0.4)
        x = rng.normal(1.0, 2.0, size=(4, 2, 8, 8))
        out, _ = batch_norm(x, p, "infer")
        expected = (x - p.running_mean[:, None, None]) / \
            np.sqrt(p.running_var[:, None, None] + p.epsilon)
        assert np.allclose(out, expected, atol=1e-10)

    def test_rejects_degenerate_batch(self):
        p = BNParams(np.ones(1), np.zeros(1))
        with pytest.raises(ValueError, match=">= 2"):
            batch_norm(np.ones((1, 1, 1, 1)), p, "train")

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 2, 4, 4))
        gamma = rng.normal(1.0, 0.3, size=2)
        beta = rng.normal(size=2)
        out, cache = batch_norm(x, BNParams(gamma.copy(), beta.copy()), "train")
        w = rng.normal(size=out.shape)
        dx, dgamma, dbeta = batch_norm_backward(w, cache)

        def run(xv, gv, bv):
            o, _ = batch_norm(xv, BNParams(gv.copy(), bv.copy()), "train")
            return float(np.sum(o * w))

        assert max_relative_error(dx, numerical_gradient(
            lambda v: run(v, gamma, beta), x.copy())) < TOL
        assert max_relative_error(dgamma, numerical_gradient(
            lambda v: run(x, v, beta), gamma.copy())) < TOL
        assert max_relative_error(dbeta, numerical_gradient(
            lambda v: run(x, gamma, v), beta.copy())) < TOL


class TestReLU:
    def test_values(self):
        out, _ = relu(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3))
        assert np.array_equal(out.ravel(), [0.0, 0.0, 2.0])

    def test_idempotent(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 4, 4))
        once, _ = relu(x)
        twice, _ = relu(once)
        assert np.array_equal(once, twice)

    def test_subgradient_at_zero_is_zero(self):
        x = np.zeros((1, 1, 2, 2))
        _, cache = relu(x)
        grad = relu_backward(np.ones_like(x), cache)
        assert not grad.any()

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradients(self, seed):
        x = spread_values((1, 2, 5, 5), seed)
        out, cache = relu(x)
        w = np.random.default_rng(seed + 999).normal(size=out.shape)
        dx = relu_backward(w, cache)
        assert max_relative_error(dx, numerical_gradient(
            lambda v: float(np.sum(relu(v)[0] * w)), x.copy())) < TOL


class TestMaxPool:
    def test_patch_maximum_and_switch(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out, switches = max_pool_2x2(x)
        assert out.ravel()[0] == 4.0
        assert switches.ravel()[0] == 3  # bottom-right cell

    def test_ties_break_to_lowest_index(self):
        x = np.full((1, 2, 4, 4), 7.0)
        out, switches = max_pool_2x2(x)
        assert np.all(out == 7.0)
        assert not switches.any()

    def test_rejects_odd_dims(self):
        with pytest.raises(ValueError, match="even"):
            max_pool_2x2(np.zeros((1, 1, 5, 4)))

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradients(self, seed):
        x = spread_values((1, 2, 6, 6), seed)
        out, switches = max_pool_2x2(x)
        w = np.random.default_rng(seed + 999).normal(size=out.shape)
        dx = max_pool_2x2_backward(w, switches)
        assert max_relative_error(dx, numerical_gradient(
            lambda v: float(np.sum(max_pool_2x2(v)[0] * w)), x.copy())) < TOL


class TestUnpool:
    def test_quarter_nonzero_after_pool(self):
        x = spread_values((1, 2, 8, 8), seed=0)
        pooled, switches = max_pool_2x2(x)
        up = unpool_2x2(pooled, switches)
        assert np.count_nonzero(up) == up.size // 4

    def test_pool_of_unpool_is_identity(self):
        x = spread_values((1, 2, 8, 8), seed=1)
        pooled, switches = max_pool_2x2(x)
        y = np.abs(pooled)  # nonnegative, as after a ReLU
        assert np.array_equal(max_pool_2x2(unpool_2x2(y, switches))[0], y)

    def test_rejects_incompatible_switches(self):
        x = np.zeros((1, 1, 2, 2))
        with pytest.raises(ValueError):
            unpool_2x2(x, np.zeros((1, 1, 4, 4), dtype=np.int8))
        with pytest.raises(ValueError):
            unpool_2x2(x, np.full((1, 1, 2, 2), 4, dtype=np.int8))

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradients(self, seed):
        base = spread_values((1, 2, 6, 6), seed)
        x, switches = max_pool_2x2(base)
        up = unpool_2x2(x, switches)
        w = np.random.default_rng(seed + 999).normal(size=up.shape)
        dx = unpool_2x2_backward(w, switches)
        assert max_relative_error(dx, numerical_gradient(
            lambda v: float(np.sum(unpool_2x2(v, switches) * w)), x.copy())) < TOL


class TestConcat:
    def test_shapes_and_slicing(self):
        a = np.random.default_rng(0).normal(size=(1, 2, 4, 4))
        b = np.random.default_rng(1).normal(size=(1, 3, 4, 4))
        out, split = concat_channels(a, b)
        assert out.shape == (1, 5, 4, 4)
        assert np.array_equal(out[:, :split], a)
        assert np.array_equal(out[:, split:], b)

    def test_rejects_spatial_mismatch(self):
        with pytest.raises(ValueError):
            concat_channels(np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 4, 8)))

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradient_split_sums_to_upstream(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 2, 3, 3))
        b = rng.normal(size=(2, 4, 3, 3))
        out, split = concat_channels(a, b)
        grad = rng.normal(size=out.shape)
        ga, gb = concat_channels_backward(grad, split)
        assert np.array_equal(ga, grad[:, :2])
        assert np.array_equal(gb, grad[:, 2:])
        assert np.sum(ga) + np.sum(gb) == pytest.approx(np.sum(grad))


class TestXavierInit:
    def test_variance_matches_fan_formula(self):
        shape = (3, 3, 350, 350)  # > 1e6 samples
        p = xavier_init(shape, seed=123, dtype=np.float64)
        target = 2.0 / (9 * 350 + 9 * 350)
        assert abs(p.weights.var() - target) / target < 0.05

    def test_bias_zero_and_deterministic(self):
        a = xavier_init((3, 3, 4, 8), seed=7)
        b = xavier_init((3, 3, 4, 8), seed=7)
        assert not a.bias.any()
        assert np.array_equal(a.weights, b.weights)
        c = xavier_init((3, 3, 4, 8), seed=8)
        assert not np.array_equal(a.weights, c.weights)


class TestSGDMomentum:
    def test_plain_sgd_step(self):
        params = {"p": np.zeros(1)}
        sgd_momentum_step(params, {"p": np.ones(1)}, {}, lr=0.1, momentum=0.0)
        assert params["p"][0] == pytest.approx(-0.1)

    def test_velocity_geometric_series(self):
        params = {"p": np.zeros(1)}
        velocity = {}
        for k in range(1, 8):
            sgd_momentum_step(params, {"p": np.ones(1)}, velocity,
                              lr=0.1, momentum=0.9)
            expected = -0.1 * (1 - 0.9 ** k) / 0.1
            assert velocity["p"][0] == pytest.approx(expected, rel=1e-12)

    def test_zero_gradient_keeps_params(self):
        params = {"p": np.full(3, 1.5)}
        sgd_momentum_step(params, {"p": np.zeros(3)}, {}, lr=0.1)
        assert np.array_equal(params["p"], np.full(3, 1.5))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            sgd_momentum_step({"p": np.zeros(2)}, {"p": np.zeros(3)}, {}, 0.1)

    def test_monotone_descent_on_quadratic(self):
        # loss = x'Ax with curvatures 1 and 4; plain SGD converges
        # monotonically for lr < 2/4
        A = np.diag([1.0, 4.0])
        params = {"x": np.array([3.0, -2.0])}
        losses = []
        for _ in range(50):
            x = params["x"]
            losses.append(float(x @ A @ x))
            sgd_momentum_step(params, {"x": 2.0 * A @ x}, {}, lr=0.2,
                              momentum=0.0)
        assert all(b < a for a, b in zip(losses, losses[1:]))


class TestMSELoss:
    def test_zero_when_equal(self):
        x = np.random.default_rng(0).normal(size=(2, 1, 4, 4))
        loss, grad = mse_loss(x, x.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_constant_offset(self):
        x = np.zeros((1, 1, 3, 3))
        loss, _ = mse_loss(x + 0.5, x)
        assert loss == pytest.approx(0.25)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))

    @pytest.mark.parametrize("seed", range(N_SEEDS))
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.normal(size=(1, 2, 3, 3))
        target = rng.normal(size=pred.shape)
        _, grad = mse_loss(pred, target)
        num = numerical_gradient(lambda v: mse_loss(v, target)[0], pred.copy())
        assert np.max(np.abs(grad - num)) < 1e-8


class TestComposedBlock:
    def test_conv_bn_relu_is_nonnegative(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 8, 8))
        p = xavier_init((3, 3, 3, 4), seed=1, dtype=np.float64)
        bn = BNParams(np.ones(4), np.zeros(4))
        h, _ = conv2d(x, p)
        h, _ = batch_norm(h, bn, "train")
        h, _ = relu(h)
        assert np.all(h >= 0)


class TestDebugMode:
    def test_check_finite_flags_bad_outputs(self):
        import artifact.nn as nn_mod
        x = np.ones((1, 1, 4, 4))
        x[0, 0, 0, 0] = np.inf
        p = ConvParams(np.ones((1, 1, 1, 1)), np.zeros(1))
        conv2d(x, p)  # silent by default
        nn_mod.CHECK_FINITE = True
        try:
            with pytest.raises(FloatingPointError):
                conv2d(x, p)
        finally:
            nn_mod.CHECK_FINITE = False


class TestDeterminism:
    def test_ops_bitwise_reproducible_in_f64(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(2, 3, 8, 8))
        p = xavier_init((3, 3, 3, 4), seed=9, dtype=np.float64)
        out1, c1 = conv2d(x, p)
        out2, c2 = conv2d(x, p)
        assert np.array_equal(out1, out2)
        g = rng.normal(size=out1.shape)
        assert all(np.array_equal(a, b) for a, b in
                   zip(conv2d_backward(g, c1), conv2d_backward(g, c2)))
