import numpy as np
import pytest

from helpers_grad import central_diff, max_rel_err
from uavlink import autodiff as ad
from uavlink.errors import MissingGrad, NonScalarLoss, ShapeMismatch
from uavlink.optim import SGD, Adam

rng = np.random.default_rng(21)


def _check_op(build, shape, tol=1e-6):
    """FD-check d(scalar build(x))/dx at a random point."""
    x0 = rng.standard_normal(shape)

    def f(xv):
        return float(build(ad.parameter(xv)).values)

    x = ad.parameter(x0.copy())
    ad.backward(build(x))
    numeric = central_diff(f, x0)
    assert max_rel_err(x.grad, numeric) < tol


def test_add_broadcast_grad():
    b0 = rng.standard_normal(4)
    r0 = rng.standard_normal((3, 4))
    _check_op(lambda x: ad.sum_(ad.mul(ad.add(x, ad.tensor(b0)), ad.tensor(r0))), (3, 4))
    # bias side with broadcasting
    x0 = rng.standard_normal((3, 4))
    r = rng.standard_normal((3, 4))

    def f(bv):
        return float(ad.sum_(ad.mul(ad.add(ad.tensor(x0), ad.parameter(bv)), ad.tensor(r))).values)

    b = ad.parameter(b0.copy())
    ad.backward(ad.sum_(ad.mul(ad.add(ad.tensor(x0), b), ad.tensor(r))))
    assert max_rel_err(b.grad, central_diff(f, b0)) < 1e-6


def test_mul_div_grad():
    c = rng.standard_normal((5,)) + 2.0
    _check_op(lambda x: ad.sum_(ad.mul(x, x)), (5,))
    _check_op(lambda x: ad.sum_(ad.div(x, ad.tensor(c))), (5,))
    _check_op(lambda x: ad.sum_(ad.div(ad.tensor(c), ad.add(x, ad.tensor(5.0)))), (5,))


def test_matmul_grad_both_sides():
    a0 = rng.standard_normal((3, 4))
    b0 = rng.standard_normal((4, 2))
    r = rng.standard_normal((3, 2))

    def fa(av):
        return float(ad.sum_(ad.mul(ad.matmul(ad.parameter(av), ad.tensor(b0)), ad.tensor(r))).values)

    a = ad.parameter(a0.copy())
    ad.backward(ad.sum_(ad.mul(ad.matmul(a, ad.tensor(b0)), ad.tensor(r))))
    assert max_rel_err(a.grad, central_diff(fa, a0)) < 1e-6

    def fb(bv):
        return float(ad.sum_(ad.mul(ad.matmul(ad.tensor(a0), ad.parameter(bv)), ad.tensor(r))).values)

    b = ad.parameter(b0.copy())
    ad.backward(ad.sum_(ad.mul(ad.matmul(ad.tensor(a0), b), ad.tensor(r))))
    assert max_rel_err(b.grad, central_diff(fb, b0)) < 1e-6


def test_batched_matmul_grad():
    b0 = rng.standard_normal((2, 4, 3))
    r = rng.standard_normal((2, 5, 3))
    _check_op(lambda x: ad.sum_(ad.mul(ad.matmul(x, ad.tensor(b0)), ad.tensor(r))), (2, 5, 4))


def test_shape_ops_grads():
    r62 = rng.standard_normal((6, 2))
    r43 = rng.standard_normal((4, 3))
    r38 = rng.standard_normal((3, 8))
    _check_op(lambda x: ad.sum_(ad.mul(ad.reshape(x, (6, 2)), ad.tensor(r62))), (3, 4))
    _check_op(lambda x: ad.sum_(ad.mul(ad.transpose(x, (1, 0)), ad.tensor(r43))), (3, 4))
    _check_op(lambda x: ad.sum_(ad.slice_(x, (slice(1, 3), slice(0, 2)))), (4, 4))
    _check_op(lambda x: ad.sum_(ad.mul(ad.concat([x, ad.mul(x, x)], axis=1),
                                       ad.tensor(r38))), (3, 4))


def test_reduction_grads():
    r5 = rng.standard_normal(5)
    r41 = rng.standard_normal((4, 1))
    _check_op(lambda x: ad.mean(ad.mul(x, x)), (4, 5))
    _check_op(lambda x: ad.sum_(ad.mul(ad.mean(x, axis=0), ad.tensor(r5))), (4, 5))
    _check_op(lambda x: ad.sum_(ad.mul(ad.sum_(x, axis=1, keepdims=True),
                                       ad.tensor(r41))), (4, 5))


def test_nonlinearity_grads():
    for op in (ad.relu, ad.tanh, ad.sigmoid, ad.log_sigmoid, ad.exp, ad.abs_):
        r = rng.standard_normal((3, 7))
        _check_op(lambda x, op=op, r=r: ad.sum_(ad.mul(op(x), ad.tensor(r))), (3, 7))
    # log and sqrt on positive inputs
    x0 = rng.uniform(0.5, 3.0, size=(6,))
    for op in (ad.log, ad.sqrt):
        def f(xv, op=op):
            return float(ad.sum_(op(ad.parameter(xv))).values)
        x = ad.parameter(x0.copy())
        ad.backward(ad.sum_(op(x)))
        assert max_rel_err(x.grad, central_diff(f, x0)) < 1e-6


def test_softmax_grad_and_normalization():
    r = rng.standard_normal((4, 6))
    _check_op(lambda x: ad.sum_(ad.mul(ad.softmax(x, axis=-1), ad.tensor(r))), (4, 6))
    y = ad.softmax(ad.tensor(rng.standard_normal((10, 8)) * 5), axis=-1)
    assert np.max(np.abs(y.values.sum(axis=-1) - 1.0)) < 1e-12


def test_layernorm_grad_and_moments():
    r = rng.standard_normal((4, 8))
    _check_op(lambda x: ad.sum_(ad.mul(ad.layernorm(x, axis=-1), ad.tensor(r))), (4, 8))
    y = ad.layernorm(ad.tensor(rng.standard_normal((5, 16)) * 3 + 1), axis=-1)
    assert np.max(np.abs(y.values.mean(axis=-1))) < 1e-9
    assert np.max(np.abs(y.values.var(axis=-1) - 1.0)) < 1e-4  # eps-limited


def test_conv2d_grads_all_inputs():
    w0 = rng.standard_normal((3, 2, 3, 3)) * 0.4
    b0 = rng.standard_normal(3) * 0.1
    x0 = rng.standard_normal((2, 6, 5))
    r = rng.standard_normal((3, 6, 5))

    def build(x, w, b):
        return ad.sum_(ad.mul(ad.conv2d(x, w, b), ad.tensor(r)))

    for target, arr0, make in (
            ("x", x0, lambda v: build(ad.parameter(v), ad.tensor(w0), ad.tensor(b0))),
            ("w", w0, lambda v: build(ad.tensor(x0), ad.parameter(v), ad.tensor(b0))),
            ("b", b0, lambda v: build(ad.tensor(x0), ad.tensor(w0), ad.parameter(v)))):
        p = ad.parameter(arr0.copy())
        if target == "x":
            ad.backward(build(p, ad.tensor(w0), ad.tensor(b0)))
        elif target == "w":
            ad.backward(build(ad.tensor(x0), p, ad.tensor(b0)))
        else:
            ad.backward(build(ad.tensor(x0), ad.tensor(w0), p))
        numeric = central_diff(lambda v, make=make: float(make(v).values), arr0)
        assert max_rel_err(p.grad, numeric) < 1e-6, target


def test_gather_scatter_avgpool_complex_grads():
    idx = np.array([0, 5, 5, 11, 3])
    r5 = rng.standard_normal(5)
    _check_op(lambda x: ad.sum_(ad.mul(ad.gather_flat(x, idx), ad.tensor(r5))), (3, 4))
    r12 = rng.standard_normal(12)
    _check_op(lambda x: ad.sum_(ad.mul(ad.scatter_flat(x, np.array([2, 7, 0, 9]), 12), ad.tensor(r12))), (4,))
    r33 = rng.standard_normal((3, 3))
    _check_op(lambda x: ad.sum_(ad.mul(ad.avg_pool2d(x, 3), ad.tensor(r33))), (5, 5))
    z0 = rng.standard_normal((6, 2))
    _check_op(lambda x: ad.sum_(ad.complex_abs2(ad.complex_mul(x, ad.tensor(z0)))), (6, 2))


def test_backward_examples():
    w = ad.parameter(rng.standard_normal(7))
    ad.backward(ad.sum_(w))
    assert np.array_equal(w.grad, np.ones(7))

    w2 = ad.parameter(rng.standard_normal(5))
    ad.backward(ad.mul(ad.tensor(0.5), ad.sum_(ad.mul(w2, w2))))
    assert np.allclose(w2.grad, w2.values, atol=1e-15)


def test_two_layer_mlp_full_jacobian():
    w1 = ad.parameter(rng.standard_normal((4, 6)) * 0.5)
    w2 = ad.parameter(rng.standard_normal((6, 3)) * 0.5)
    x = ad.tensor(rng.standard_normal((5, 4)))
    r = rng.standard_normal((5, 3))

    def loss_from(w1v, w2v):
        h = ad.tanh(ad.matmul(x, ad.tensor(w1v)))
        return float(ad.sum_(ad.mul(ad.matmul(h, ad.tensor(w2v)), ad.tensor(r))).values)

    h = ad.tanh(ad.matmul(x, w1))
    ad.backward(ad.sum_(ad.mul(ad.matmul(h, w2), ad.tensor(r))))
    n1 = central_diff(lambda v: loss_from(v, w2.values), w1.values.copy())
    n2 = central_diff(lambda v: loss_from(w1.values, v), w2.values.copy())
    assert max_rel_err(w1.grad, n1) < 1e-6
    assert max_rel_err(w2.grad, n2) < 1e-6


def test_nonscalar_loss_rejected():
    x = ad.parameter(np.ones((2, 2)))
    with pytest.raises(NonScalarLoss):
        ad.backward(ad.mul(x, x))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatch):
        ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        ad.conv2d(ad.tensor(np.ones((2, 4, 4))), ad.tensor(np.ones((3, 5, 3, 3))),
                  ad.tensor(np.zeros(3)))


def test_gradient_accumulation_linearity():
    x = ad.parameter(rng.standard_normal((3, 3)))
    l1 = ad.sum_(ad.mul(x, x))
    l2 = ad.mean(ad.tanh(x))
    ad.backward(ad.add(ad.mul(ad.tensor(2.0), l1), ad.mul(ad.tensor(3.0), l2)))
    combined = x.grad.copy()
    x.zero_grad()
    ad.backward(l1)
    g1 = x.grad.copy()
    x.zero_grad()
    ad.backward(l2)
    g2 = x.grad.copy()
    assert np.allclose(combined, 2 * g1 + 3 * g2, atol=1e-12)


def test_determinism_bit_identical():
    def run():
        r = np.random.default_rng(99)
        x = ad.parameter(r.standard_normal((4, 4)))
        y = ad.layernorm(ad.tanh(ad.matmul(x, ad.tensor(r.standard_normal((4, 4))))), axis=-1)
        loss = ad.mean(ad.mul(y, y))
        ad.backward(loss)
        return loss.values.copy(), x.grad.copy()

    (v1, g1), (v2, g2) = run(), run()
    assert np.array_equal(v1, v2) and np.array_equal(g1, g2)


def test_sgd_step_and_zero_lr():
    w = ad.parameter(np.array([1.0, -2.0]))
    opt = SGD({"w": w}, learning_rate=0.0)
    ad.backward(ad.sum_(ad.mul(w, w)))
    opt.step()
    assert np.array_equal(w.values, [1.0, -2.0])
    # nonzero lr moves against the gradient
    opt = SGD({"w": w}, learning_rate=0.1)
    ad.backward(ad.mul(ad.tensor(0.5), ad.sum_(ad.mul(w, w))))
    opt.step()
    assert np.allclose(w.values, [0.9, -1.8], atol=1e-15)


def test_quadratic_bowl_monotone_descent():
    target = rng.standard_normal(6)
    w = ad.parameter(np.zeros(6))
    opt = SGD({"w": w}, learning_rate=0.1)
    losses = []
    for _ in range(50):
        diff = ad.sub(w, ad.tensor(target))
        loss = ad.mul(ad.tensor(0.5), ad.sum_(ad.mul(diff, diff)))
        losses.append(loss.item())
        ad.backward(loss)
        opt.step()
    assert np.all(np.diff(losses) <= 1e-12)


def test_adam_first_step_magnitude():
    for scale in (1e-4, 1.0, 1e4):
        w = ad.parameter(np.array([5.0]))
        opt = Adam({"w": w}, learning_rate=0.01)
        ad.backward(ad.mul(ad.tensor(scale), ad.sum_(w)))
        opt.step()
        assert abs(abs(5.0 - w.values[0]) - 0.01) < 1e-5


def test_missing_grad_raises():
    w = ad.parameter(np.ones(3))
    opt = Adam({"w": w}, learning_rate=0.1)
    with pytest.raises(MissingGrad):
        opt.step()
