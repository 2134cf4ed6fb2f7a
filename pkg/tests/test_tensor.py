"""Tensor-core forward values against independent oracles, plus tape contracts."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import fd_gradcheck, rand_tensor
from gazefusion import tensor as T


def triple_loop_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += float(a[i, t]) * float(b[t, j])
    return out


def naive_conv2d(x, kernels, stride, padding):
    cin, h, w = x.shape
    cout, _, kh, kw = kernels.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((cout, oh, ow))
    for co in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(cin):
                    for a in range(kh):
                        for b in range(kw):
                            acc += xp[ci, i * stride + a, j * stride + b] * float(kernels[co, ci, a, b])
                out[co, i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        a = T.Tensor([[1, 2], [3, 4]])
        eye = T.Tensor(np.eye(2))
        np.testing.assert_array_equal(T.matmul(a, eye).data, a.data)

    def test_against_triple_loop(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        expected = triple_loop_matmul(a, b)
        assert expected.tolist() == [[19.0, 22.0], [43.0, 50.0]]
        got = T.matmul(T.Tensor(a), T.Tensor(b)).data
        np.testing.assert_allclose(got, expected)

    def test_random_against_triple_loop(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((3, 5))
        got = T.matmul(T.Tensor(a, dtype=np.float64), T.Tensor(b, dtype=np.float64)).data
        np.testing.assert_allclose(got, triple_loop_matmul(a, b), rtol=1e-12)

    def test_shape_mismatch_reports_both_shapes(self):
        a = T.Tensor(np.zeros((2, 3)))
        b = T.Tensor(np.zeros((4, 5)))
        with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            T.matmul(a, b)


class TestSoftmax:
    def test_uniform_on_equal_inputs(self):
        out = T.softmax(T.Tensor([0.0, 0.0, 0.0])).data
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-7)

    def test_large_magnitudes_no_overflow(self):
        out = T.softmax(T.Tensor([1000.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_against_float64_exp_normalize(self):
        x = np.array([1.0, 2.0, 3.0])
        expected = np.exp(x) / np.exp(x).sum()
        got = T.softmax(T.Tensor(x)).data
        np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_slices_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-500, 500, size=(4, 7)).astype(np.float32)
            out = T.softmax(T.Tensor(x), axis=1).data
            np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_invalid_axis(self):
        with pytest.raises(T.ShapeError):
            T.softmax(T.Tensor([[1.0, 2.0]]), axis=2)


class TestLayerNorm:
    def _affine(self, n, dtype=np.float32):
        return (T.Tensor(np.ones(n), dtype=dtype), T.Tensor(np.zeros(n), dtype=dtype))

    def test_constant_row_maps_to_zero(self):
        gamma, beta = self._affine(3)
        out = T.layer_norm(T.Tensor([5.0, 5.0, 5.0]), gamma, beta).data
        np.testing.assert_allclose(out, [0.0, 0.0, 0.0], atol=1e-6)

    def test_two_point_row(self):
        gamma, beta = self._affine(2)
        out = T.layer_norm(T.Tensor([1.0, 3.0]), gamma, beta).data
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-4)

    def test_random_rows_standardized(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((5, 64))
        gamma, beta = self._affine(64, dtype=np.float64)
        out = T.layer_norm(T.Tensor(x, dtype=np.float64), gamma, beta, eps=1e-12).data
        assert np.abs(out.mean(axis=-1)).max() < 1e-6
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 3, 3))
        k = np.ones((1, 1, 1, 1))
        out = T.conv2d(T.Tensor(x), T.Tensor(k)).data
        np.testing.assert_allclose(out, x, rtol=1e-6)

    def test_all_ones(self):
        x = T.Tensor(np.ones((1, 3, 3)))
        k = T.Tensor(np.ones((1, 1, 2, 2)))
        out = T.conv2d(x, k).data
        np.testing.assert_allclose(out, np.full((1, 2, 2), 4.0))

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1)])
    def test_against_naive_loops(self, stride, padding):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        got = T.conv2d(T.Tensor(x, dtype=np.float64), T.Tensor(k, dtype=np.float64),
                       stride=stride, padding=padding).data
        np.testing.assert_allclose(got, naive_conv2d(x, k, stride, padding), rtol=1e-10)

    def test_kernel_larger_than_input(self):
        with pytest.raises(T.ShapeError, match="larger than padded input"):
            T.conv2d(T.Tensor(np.zeros((1, 2, 2))), T.Tensor(np.zeros((1, 1, 4, 4))))


class TestElementwise:
    def test_sigmoid_zero(self):
        assert T.sigmoid(T.Tensor(0.0)).item() == pytest.approx(0.5, abs=1e-9)

    def test_sigmoid_extremes_stay_finite(self):
        out = T.sigmoid(T.Tensor([-1000.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_relu(self):
        out = T.relu(T.Tensor([-2.0, 0.0, 3.0])).data
        np.testing.assert_array_equal(out, [0.0, 0.0, 3.0])

    def test_dropout_eval_mode_is_identity(self):
        x = T.Tensor([1.0, 2.0, 3.0])
        out = T.dropout(x, 0.426, train_mode=False, rng=0)
        assert out is x

    def test_dropout_train_reproducible(self):
        x = T.Tensor(np.linspace(-1, 1, 100))
        a = T.dropout(x, 0.5, train_mode=True, rng=123).data
        b = T.dropout(x, 0.5, train_mode=True, rng=123).data
        np.testing.assert_array_equal(a, b)

    def test_dropout_scales_survivors(self):
        x = T.Tensor(np.ones(1000))
        out = T.dropout(x, 0.25, train_mode=True, rng=5).data
        kept = out[out != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75, rtol=1e-6)

    def test_dropout_bad_probability(self):
        x = T.Tensor([1.0])
        for p in (-0.1, 1.0, 1.5):
            with pytest.raises(T.ConfigError):
                T.dropout(x, p, train_mode=True, rng=0)

    def test_adaptive_avg_pool_constant(self):
        x = T.Tensor(np.full((2, 4, 4), 7.0))
        np.testing.assert_allclose(T.adaptive_avg_pool2d(x).data, [7.0, 7.0])

    def test_max_pool(self):
        x = T.Tensor(np.arange(16, dtype=np.float32).reshape(1, 4, 4))
        out = T.max_pool2d(x, kernel=2).data
        np.testing.assert_array_equal(out, [[[5, 7], [13, 15]]])

    def test_concat_and_embedding_lookup(self):
        a = T.Tensor([[1.0, 2.0]])
        b = T.Tensor([[3.0, 4.0]])
        cat = T.concat([a, b], axis=0)
        np.testing.assert_array_equal(cat.data, [[1, 2], [3, 4]])
        row = T.embedding_lookup(cat, [1])
        np.testing.assert_array_equal(row.data, [[3, 4]])

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_is_an_error(self):
        with pytest.raises(T.NonFiniteError):
            T.Tensor([np.inf])
        x = T.Tensor([1e38], dtype=np.float32)
        with pytest.raises(T.NonFiniteError):
            T.mul(x, x)


class TestBackward:
    def test_square_at_three(self):
        x = T.Tensor(3.0, requires_grad=True)
        y = T.mul(x, x)
        T.backward(y)
        assert x.grad == pytest.approx(6.0)

    def test_reuse_accumulates(self):
        x = T.Tensor(1.5, requires_grad=True)
        y = T.add(x, x)
        T.backward(y)
        assert x.grad == pytest.approx(2.0)

    def test_fanout_sums_branch_gradients(self):
        x = T.Tensor(2.0, requires_grad=True)
        branches = [T.mul(x, float(k)) for k in range(1, 5)]
        total = branches[0]
        for b in branches[1:]:
            total = T.add(total, b)
        T.backward(total)
        assert x.grad == pytest.approx(1 + 2 + 3 + 4)

    def test_non_scalar_loss_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(T.GradientError):
            T.backward(T.mul(x, x))

    def test_tape_topological_order_and_single_visit(self):
        x = T.Tensor(2.0, requires_grad=True)
        y = T.mul(x, x)
        z = T.add(y, y)
        loss = T.mul(z, 1.0)
        tape = T.ComputationTape.trace(loss)
        positions = {id(n): i for i, n in enumerate(tape.nodes)}
        assert len(positions) == len(tape.nodes)  # each node exactly once
        for node in tape.nodes:
            for parent in node._parents:
                assert positions[id(parent)] < positions[id(node)]

    def test_sigmoid_linear_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        w = rand_tensor(rng, (3, 4))
        x = rand_tensor(rng, (4, 1), requires_grad=False)

        def loss():
            return T.sum_all(T.sigmoid(T.matmul(w, x)))

        fd_gradcheck(loss, [w])

    def test_no_grad_blocks_recording(self):
        x = T.Tensor(2.0, requires_grad=True)
        with T.no_grad():
            y = T.mul(x, x)
        assert not y.requires_grad
        with pytest.raises(T.GradientError):
            T.backward(y)


class TestGradientsAllPrimitives:
    """Central finite differences on random inputs, 64-bit oracle."""

    def setup_method(self):
        self.rng = np.random.default_rng(1234)

    def test_matmul(self):
        a = rand_tensor(self.rng, (3, 4))
        b = rand_tensor(self.rng, (4, 2))
        fd_gradcheck(lambda: T.sum_all(T.mul(T.matmul(a, b), T.matmul(a, b))), [a, b])

    def test_add_sub_mul_broadcast(self):
        a = rand_tensor(self.rng, (3, 4))
        bias = rand_tensor(self.rng, (4,))
        fd_gradcheck(lambda: T.sum_all(T.mul(T.add(a, bias), T.sub(a, bias))), [a, bias])

    def test_relu(self):
        # keep inputs away from the kink at zero
        data = self.rng.uniform(0.2, 1.5, (3, 3)) * self.rng.choice([-1.0, 1.0], (3, 3))
        x = T.Tensor(data, requires_grad=True, dtype=np.float64)
        w = T.Tensor(self.rng.standard_normal((3, 3)), dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.mul(T.relu(x), w)), [x])

    def test_sigmoid(self):
        x = rand_tensor(self.rng, (5,))
        fd_gradcheck(lambda: T.sum_all(T.sigmoid(x)), [x])

    def test_softmax(self):
        x = rand_tensor(self.rng, (2, 5))
        w = T.Tensor(self.rng.standard_normal((2, 5)), dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.mul(T.softmax(x, axis=1), w)), [x])

    def test_layer_norm(self):
        x = rand_tensor(self.rng, (3, 6))
        gamma = rand_tensor(self.rng, (6,), scale=0.5)
        beta = rand_tensor(self.rng, (6,), scale=0.5)
        w = T.Tensor(self.rng.standard_normal((3, 6)), dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.mul(T.layer_norm(x, gamma, beta), w)), [x, gamma, beta])

    def test_conv2d(self):
        x = rand_tensor(self.rng, (2, 5, 5))
        k = rand_tensor(self.rng, (3, 2, 3, 3))
        w = T.Tensor(self.rng.standard_normal((3, 3, 3)), dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.mul(T.conv2d(x, k, stride=2, padding=1), w)), [x, k])

    def test_max_pool2d(self):
        # well-separated values so the eps perturbation cannot flip an argmax
        base = self.rng.permutation(36).astype(np.float64).reshape(1, 6, 6)
        x = T.Tensor(base, requires_grad=True, dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.max_pool2d(x, kernel=2)), [x])

    def test_adaptive_avg_pool2d(self):
        x = rand_tensor(self.rng, (3, 4, 5))
        w = T.Tensor(self.rng.standard_normal(3), dtype=np.float64)
        fd_gradcheck(lambda: T.sum_all(T.mul(T.adaptive_avg_pool2d(x), w)), [x])

    def test_dropout_fixed_mask(self):
        x = rand_tensor(self.rng, (4, 4))
        fd_gradcheck(lambda: T.sum_all(T.dropout(x, 0.3, train_mode=True, rng=99)), [x])

    def test_concat_slice_gather_reshape(self):
        a = rand_tensor(self.rng, (2, 3))
        b = rand_tensor(self.rng, (2, 3))

        def loss():
            cat = T.concat([a, b], axis=1)
            left = T.slice_cols(cat, 0, 4)
            row = T.embedding_lookup(left, [1, 1, 0])
            return T.mean_all(T.mul(T.reshape(row, (3, 4)), T.reshape(row, (3, 4))))

        fd_gradcheck(loss, [a, b])

    def test_transpose_and_neg(self):
        a = rand_tensor(self.rng, (3, 2))
        fd_gradcheck(lambda: T.sum_all(T.mul(T.transpose(a), T.neg(T.transpose(a)))), [a])
