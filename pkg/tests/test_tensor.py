import numpy as np
import pytest

from freqseg import tensor as T
from freqseg.errors import ConfigError, ShapeError

from oracles import naive_conv2d, naive_transposed_conv2d


class TestConv2d:
    def test_identity_1x1(self, rng):
        x = rng.normal(size=(2, 3, 5, 4))
        w = np.eye(3)[:, :, None, None]
        np.testing.assert_array_equal(T.conv2d(x, w, np.zeros(3)), x)

    def test_ones_kernel_counts_overlap(self):
        out = T.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), pad=1)
        assert out[0, 0, 1, 1] == 9
        assert out[0, 0, 0, 0] == out[0, 0, 2, 2] == out[0, 0, 0, 2] == 4

    @pytest.mark.parametrize("shape", [(1, 2, 4, 4), (2, 3, 6, 6), (2, 1, 5, 6)])
    @pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (1, 1, 0), (3, 2, 1), (2, 2, 0), (3, 1, 0)])
    def test_matches_loop_oracle(self, rng, shape, k, stride, pad):
        x = rng.normal(size=shape)
        w = rng.normal(size=(4, shape[1], k, k))
        b = rng.normal(size=4)
        np.testing.assert_allclose(T.conv2d(x, w, b, stride, pad), naive_conv2d(x, w, b, stride, pad),
                                   rtol=0, atol=1e-12)

    def test_output_size(self):
        assert T.conv2d_output_size(7, 8, 3, 3, 2, 1) == (4, 4)
        x = np.zeros((1, 1, 7, 8))
        assert T.conv2d(x, np.zeros((2, 1, 3, 3)), None, 2, 1).shape == (1, 2, 4, 4)

    def test_linear_in_x(self, rng):
        w = rng.normal(size=(2, 3, 3, 3))
        x, y = rng.normal(size=(2, 1, 3, 5, 5))
        lhs = T.conv2d(2.0 * x - 3.0 * y, w, None, 1, 1)
        np.testing.assert_allclose(lhs, 2 * T.conv2d(x, w, None, 1, 1) - 3 * T.conv2d(y, w, None, 1, 1),
                                   atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 1, 1)))

    @pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (1, 1, 0), (3, 2, 1), (4, 4, 0)])
    def test_backward_is_adjoint(self, rng, k, stride, pad):
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3, k, k))
        y = T.conv2d(x, w, None, stride, pad)
        dy = rng.normal(size=y.shape)
        dx, dw, _ = T.conv2d_backward(dy, x, w, stride, pad)
        assert np.isclose((y * dy).sum(), (x * dx).sum(), rtol=1e-12, atol=1e-10)
        # linear in w as well
        assert np.isclose((y * dy).sum(), (w * dw).sum(), rtol=1e-12, atol=1e-10)


class TestTransposedConv:
    def test_single_pixel_scatter(self):
        x = np.zeros((1, 1, 3, 3))
        x[0, 0, 0, 0] = 1
        out = T.transposed_conv2d(x, np.ones((1, 1, 2, 2)))
        expected = np.zeros((6, 6))
        expected[:2, :2] = 1
        np.testing.assert_array_equal(out[0, 0], expected)

    def test_zero_input_gives_bias(self):
        out = T.transposed_conv2d(np.zeros((2, 3, 2, 2)), np.ones((3, 4, 2, 2)), np.arange(4.0))
        assert out.shape == (2, 4, 4, 4)
        np.testing.assert_array_equal(out, np.broadcast_to(np.arange(4.0).reshape(1, 4, 1, 1), out.shape))

    @pytest.mark.parametrize("shape", [(1, 1, 2, 2), (2, 3, 3, 2), (1, 2, 1, 1)])
    def test_matches_scatter_oracle(self, rng, shape):
        x = rng.normal(size=shape)
        w = rng.normal(size=(shape[1], 3, 2, 2))
        b = rng.normal(size=3)
        np.testing.assert_allclose(T.transposed_conv2d(x, w, b), naive_transposed_conv2d(x, w, b), atol=1e-12)

    @pytest.mark.parametrize("cin,cout,h", [(1, 1, 2), (3, 2, 3), (4, 5, 4)])
    def test_adjoint_of_stride2_conv(self, rng, cin, cout, h):
        x = rng.normal(size=(1, cin, h, h))
        y = rng.normal(size=(1, cout, 2 * h, 2 * h))
        w = rng.normal(size=(cin, cout, 2, 2))
        lhs = (T.conv2d(y, w, None, stride=2) * x).sum()
        rhs = (y * T.transposed_conv2d(x, w)).sum()
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_rejects_other_kernels(self):
        with pytest.raises(ShapeError):
            T.transposed_conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)))

    def test_backward_adjoint(self, rng):
        x = rng.normal(size=(2, 3, 3, 4))
        w = rng.normal(size=(3, 2, 2, 2))
        y = T.transposed_conv2d(x, w)
        dy = rng.normal(size=y.shape)
        dx, dw, _ = T.transposed_conv2d_backward(dy, x, w)
        assert np.isclose((y * dy).sum(), (x * dx).sum(), rtol=1e-12)
        assert np.isclose((y * dy).sum(), (w * dw).sum(), rtol=1e-12)


class TestElementwise:
    def test_sigmoid_zero(self):
        assert T.sigmoid(np.array([0.0]))[0] == 0.5

    def test_sigmoid_range_and_extremes(self):
        y = T.sigmoid(np.array([-800.0, -30.0, 30.0, 800.0]))
        assert np.all(np.isfinite(y))
        assert np.all((y >= 0) & (y <= 1))
        assert 0 < T.sigmoid(np.array([-30.0]))[0] < 1e-12

    def test_sigmoid_gradient_at_zero(self):
        y = T.sigmoid(np.zeros(1))
        assert T.sigmoid_backward(np.ones(1), y)[0] == 0.25

    def test_softmax_uniform(self):
        np.testing.assert_allclose(T.softmax(np.zeros(3)), [1 / 3] * 3, rtol=0, atol=1e-16)

    def test_softmax_rows_sum_to_one(self, rng):
        y = T.softmax(rng.normal(scale=30, size=(5, 7, 9)), axis=1)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_bad_axis(self):
        with pytest.raises(ConfigError):
            T.softmax(np.zeros((2, 2)), axis=3)

    def test_avg_pool2(self):
        assert T.avg_pool2(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))[0, 0, 0, 0] == 4.0

    def test_avg_pool2_odd(self):
        with pytest.raises(ShapeError):
            T.avg_pool2(np.zeros((1, 1, 3, 4)))

    def test_pool_then_upsample_keeps_shape(self, rng):
        x = rng.normal(size=(2, 3, 8, 6))
        assert T.upsample_bilinear(T.avg_pool2(x), (8, 6)).shape == x.shape

    def test_upsample_corner_aligned(self):
        x = np.array([[[[0.0, 1.0], [2.0, 3.0]]]])
        y = T.upsample_bilinear(x, (3, 3))
        np.testing.assert_allclose(y[0, 0], [[0, 0.5, 1], [1, 1.5, 2], [2, 2.5, 3]])
        # corners reproduce the input exactly
        z = T.upsample_bilinear(x, (5, 7))
        assert z[0, 0, 0, 0] == 0 and z[0, 0, -1, -1] == 3

    def test_upsample_from_single_pixel(self):
        np.testing.assert_array_equal(T.upsample_bilinear(np.full((1, 2, 1, 1), 3.0), (4, 4)),
                                      np.full((1, 2, 4, 4), 3.0))

    def test_concat_mismatch(self):
        with pytest.raises(ShapeError):
            T.concat_channels(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))

    def test_concat_roundtrip(self, rng):
        a, b = rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 3, 3, 3))
        da, db = T.concat_channels_backward(T.concat_channels(a, b), [2, 3])
        np.testing.assert_array_equal(da, a)
        np.testing.assert_array_equal(db, b)

    def test_scale_backward_is_constant(self, rng):
        x = rng.normal(size=(1, 2, 3, 3))
        # L = sum(scale(x, c))  ->  dL/dx == c
        np.testing.assert_array_equal(T.scale_backward(np.ones_like(T.scale(x, 2.5)), 2.5), np.full(x.shape, 2.5))

    def test_relu_backward(self):
        x = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(T.relu_backward(np.ones(3), x), [0, 0, 1])

    @pytest.mark.parametrize("op", ["softmax", "upsample", "pool"])
    def test_backward_adjoint_linear_parts(self, rng, op):
        x = rng.normal(size=(2, 3, 4, 6))
        if op == "softmax":
            # finite differences of a random projection of softmax
            y = T.softmax(x, axis=1)
            r = rng.normal(size=y.shape)
            g = T.softmax_backward(r, y, axis=1)
            d = rng.normal(size=x.shape)
            eps = 1e-6
            fd = ((T.softmax(x + eps * d, 1) * r).sum() - (T.softmax(x - eps * d, 1) * r).sum()) / (2 * eps)
            assert abs(fd - (g * d).sum()) < 1e-8
        elif op == "upsample":
            y = T.upsample_bilinear(x, (7, 11))
            r = rng.normal(size=y.shape)
            assert np.isclose((y * r).sum(), (x * T.upsample_bilinear_backward(r, (4, 6))).sum(), rtol=1e-12)
        else:
            y = T.avg_pool2(x)
            r = rng.normal(size=y.shape)
            assert np.isclose((y * r).sum(), (x * T.avg_pool2_backward(r)).sum(), rtol=1e-12)

    def test_finite_outputs(self, rng):
        x = rng.normal(scale=1e3, size=(1, 2, 4, 4))
        for y in (T.sigmoid(x), T.relu(x), T.softmax(x, 1), T.avg_pool2(x), T.upsample_bilinear(x, (5, 5))):
            assert np.all(np.isfinite(y))
