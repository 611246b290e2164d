"""Gradient checks: every primitive against central finite differences."""

import numpy as np
import pytest

from gram import nn


def numeric_grad(f, arrays, h=1e-5):
    """Central-difference gradients of scalar f with respect to each array."""
    grads = []
    for k, x in enumerate(arrays):
        g = np.zeros_like(x)
        flat = x.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(*arrays)
            flat[i] = orig - h
            down = f(*arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check_op(op, *shapes, make=None, tol=1e-4, **kwargs):
    rng = np.random.default_rng(hash((op.__name__,) + shapes) % 2**32)
    arrays = [rng.standard_normal(s) for s in shapes] if make is None else make(rng)

    def scalar_fn(*arrs):
        ts = [nn.Tensor(a) for a in arrs]
        out = op(*ts, **kwargs)
        # weight the output so the gradient is not uniform
        w = np.linspace(0.5, 1.5, out.data.size).reshape(out.shape)
        return float((out.data * w).sum())

    ts = [nn.Tensor(a, requires_grad=True) for a in arrays]
    out = op(*ts, **kwargs)
    w = np.linspace(0.5, 1.5, out.data.size).reshape(out.shape)
    loss = nn.sum_(nn.mul(out, w))
    loss.backward()

    expected = numeric_grad(scalar_fn, arrays)
    for t, e in zip(ts, expected):
        assert t.grad is not None
        scale = max(1.0, np.abs(e).max())
        assert np.max(np.abs(t.grad - e)) / scale < tol, op.__name__


class TestPrimitiveGradients:
    def test_add_broadcast(self):
        check_op(nn.add, (3, 4), (4,))

    def test_mul_broadcast(self):
        check_op(nn.mul, (2, 3, 4), (3, 1))

    def test_matmul(self):
        check_op(nn.matmul, (3, 4), (4, 5))

    def test_matmul_batched(self):
        check_op(nn.matmul, (2, 3, 4), (4, 5))

    def test_transpose(self):
        check_op(nn.transpose, (2, 3, 4), axes=(1, 2, 0))

    def test_reshape(self):
        check_op(nn.reshape, (3, 4), shape=(2, 6))

    def test_broadcast_to(self):
        check_op(nn.broadcast_to, (1, 4), shape=(3, 4))

    def test_concat(self):
        def op(a, b):
            return nn.concat([a, b], axis=1)

        op.__name__ = "concat"
        check_op(op, (2, 3), (2, 2))

    def test_slice(self):
        def op(a):
            return a[:, 1:3]

        op.__name__ = "slice"
        check_op(op, (3, 5))

    def test_pad_axis(self):
        check_op(nn.pad_axis, (2, 3), before=1, after=2, axis=1)

    def test_gather(self):
        idx = np.array([[0, 2], [1, 1]])
        check_op(nn.gather, (2, 4), index=idx, axis=1)

    def test_gather_broadcast_feature_dim(self):
        idx = np.array([[0, 2], [1, 1]])[..., None]  # (2, 2, 1) over (2, 4, 3)
        check_op(nn.gather, (2, 4, 3), index=idx, axis=1)

    def test_gather_repeated_indices(self):
        idx = np.array([[1, 1, 0]])
        check_op(nn.gather, (1, 3), index=idx, axis=1)

    def test_scatter(self):
        idx = np.array([[2, 0], [1, 3]])
        check_op(nn.scatter, (2, 2), index=idx, axis=1, size=5)

    def test_exp(self):
        check_op(nn.exp, (3, 3))

    def test_log(self):
        check_op(nn.log, (3, 3), make=lambda rng: [rng.uniform(0.5, 2.0, (3, 3))])

    def test_pow(self):
        check_op(nn.pow_const, (4,), make=lambda rng: [rng.uniform(0.5, 2.0, (4,))],
                 exponent=-0.5)

    def test_sigmoid(self):
        check_op(nn.sigmoid, (5,))

    def test_silu(self):
        check_op(nn.silu, (5,))

    def test_gelu(self):
        check_op(nn.gelu, (7,))

    def test_softplus(self):
        check_op(nn.softplus, (5,))

    def test_softmax(self):
        check_op(nn.softmax, (3, 5))

    def test_log_softmax(self):
        check_op(nn.log_softmax, (3, 5))

    def test_sum_axis(self):
        check_op(nn.sum_, (3, 4), axis=1)

    def test_sum_keepdims(self):
        check_op(nn.sum_, (3, 4), axis=0, keepdims=True)

    def test_mean(self):
        check_op(nn.mean, (3, 4), axis=None)

    def test_layer_norm(self):
        check_op(nn.layer_norm, (3, 6), (6,), (6,))

    def test_selective_scan(self):
        def make(rng):
            b, t, d, n = 2, 5, 3, 4
            return [rng.standard_normal((b, t, d)),
                    rng.uniform(0.1, 0.9, (b, t, d)),
                    -rng.uniform(0.2, 1.5, (d, n)),
                    rng.standard_normal((b, t, n)),
                    rng.standard_normal((b, t, n))]

        check_op(nn.selective_scan, make=make)

    def test_selective_scan_exact_zoh(self):
        def make(rng):
            b, t, d, n = 1, 4, 2, 3
            return [rng.standard_normal((b, t, d)),
                    rng.uniform(0.1, 0.9, (b, t, d)),
                    -rng.uniform(0.2, 1.5, (d, n)),
                    rng.standard_normal((b, t, n)),
                    rng.standard_normal((b, t, n))]

        check_op(nn.selective_scan, make=make, exact_discretization=True)


class TestBasics:
    def test_softmax_uniform(self):
        out = nn.softmax(nn.Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.25)

    def test_layer_norm_constant_vector(self):
        out = nn.layer_norm(nn.Tensor(np.full((5,), 3.0)),
                            nn.Tensor(np.ones(5)), nn.Tensor(np.zeros(5)))
        np.testing.assert_allclose(out.data, 0.0)

    def test_matmul_identity(self):
        x = np.random.default_rng(0).standard_normal((4, 4))
        out = nn.matmul(nn.Tensor(np.eye(4)), nn.Tensor(x))
        np.testing.assert_allclose(out.data, x)

    def test_backward_sum_gives_ones(self):
        x = nn.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        nn.sum_(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_backward_quadratic(self):
        x = nn.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        nn.sum_(nn.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_backward_requires_scalar(self):
        x = nn.Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            nn.mul(x, 2.0).backward()

    def test_reused_node_accumulates(self):
        x = nn.Tensor(np.array([3.0]), requires_grad=True)
        y = nn.add(nn.mul(x, 2.0), nn.mul(x, 5.0))
        nn.sum_(y).backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_no_grad_blocks_tape(self):
        x = nn.Tensor(np.ones(3), requires_grad=True)
        with nn.no_grad():
            y = nn.mul(x, 2.0)
        assert y._backward is None and y._parents == ()
