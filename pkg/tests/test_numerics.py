import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from promptloc.numerics import (
    AdamW,
    OptimizerState,
    Tensor,
    adamw_step,
    backward,
    precision,
    record,
    softmax_array,
)
from promptloc.numerics import ops

from gradcheck import max_relative_error, numeric_grad


def test_backward_linear_sum():
    p = Tensor(np.zeros(3), requires_grad=True)
    with record():
        loss = ops.sum(p)
    backward(loss)
    np.testing.assert_array_equal(p.grad, [1, 1, 1])


def test_backward_quadratic():
    p = Tensor([1.0, 2.0], requires_grad=True)
    with record():
        loss = ops.sum(p * p)
    backward(loss)
    np.testing.assert_allclose(p.grad, [2.0, 4.0])


def test_backward_rejects_non_scalar():
    p = Tensor(np.ones(3), requires_grad=True)
    with record():
        out = p * 2.0
    with pytest.raises(ValueError, match="scalar"):
        backward(out)


def test_unreachable_params_get_zero_grad():
    p = Tensor(np.ones(2), requires_grad=True)
    q = Tensor(np.ones(4), requires_grad=True)
    with record():
        loss = ops.sum(p)
    backward(loss, params=[p, q])
    np.testing.assert_array_equal(q.grad, np.zeros(4))


def test_no_graph_outside_record():
    p = Tensor(np.ones(2), requires_grad=True)
    out = ops.sum(p * p)
    assert not out.requires_grad


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(0)
    with precision(np.float64):
        x = Tensor(rng.normal(size=(5, 4)))
        target = Tensor(rng.uniform(size=(5, 3)))
        w1 = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        w2 = Tensor(rng.normal(size=(6, 3)), requires_grad=True)

        def loss_fn():
            h = ops.gelu(x @ w1)
            return ops.mse(ops.softmax(h @ w2, axis=-1), target)

        with record():
            loss = loss_fn()
        backward(loss)
        for w in (w1, w2):
            num = numeric_grad(lambda: loss_fn().data, w.data, h=1e-3)
            assert max_relative_error(w.grad, num) < 1e-3


@pytest.mark.parametrize(
    "build",
    [
        lambda rng, x: ops.layer_norm(x, Tensor(rng.normal(size=4), True), Tensor(rng.normal(size=4), True)),
        lambda rng, x: ops.silu(x) * x,
        lambda rng, x: ops.log_softmax(x, axis=0),
        lambda rng, x: ops.concat([x, ops.exp(x)], axis=1),
        lambda rng, x: ops.index(x, (np.array([0, 2, 0]), np.array([1, 1, 1]))),
        lambda rng, x: ops.embedding(np.array([[0, 1, 0]]), x),
    ],
)
def test_elementary_ops_gradients(build):
    rng = np.random.default_rng(1)
    with precision(np.float64):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        weights = rng.normal(size=(50,))
        out_probe = build(np.random.default_rng(2), x)
        wts = weights[: out_probe.size].reshape(out_probe.shape)

        def f():
            return ops.sum(build(np.random.default_rng(2), x) * wts)

        with record():
            loss = f()
        backward(loss)
        num = numeric_grad(lambda: f().data, x.data, h=1e-5)
        assert max_relative_error(x.grad, num, floor=1e-6) < 1e-4


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_and_group_norm_gradients(stride):
    rng = np.random.default_rng(3)
    with precision(np.float64):
        x = Tensor(rng.normal(size=(2, 6, 6, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 3, 4, 5)) * 0.3, requires_grad=True)
        gamma = Tensor(rng.normal(size=4), requires_grad=True)
        beta = Tensor(rng.normal(size=4), requires_grad=True)
        side = 12 // stride
        probe = rng.normal(size=(2, side, side, 5))

        def f():
            h = ops.group_norm(x, gamma, beta, groups=2)
            y = ops.upsample_nearest(ops.conv2d(h, w, stride=stride), 2)
            return ops.sum(y * probe)

        with record():
            loss = f()
        backward(loss)
        for t in (x, w, gamma):
            num = numeric_grad(lambda: f().data, t.data, h=1e-5)
            assert max_relative_error(t.grad, num, floor=1e-6) < 1e-4


def test_embedding_gradient_scatter_adds_repeats():
    table = Tensor(np.zeros((4, 2)), requires_grad=True)
    with record():
        out = ops.embedding(np.array([1, 3, 1]), table)
        loss = ops.sum(out)
    backward(loss)
    np.testing.assert_array_equal(table.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])


def test_softmax_examples():
    np.testing.assert_allclose(softmax_array(np.array([0.0, 0.0])), [0.5, 0.5])
    big = softmax_array(np.array([1000.0, 0.0], dtype=np.float32))
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0, abs=1e-30)
    third = softmax_array(np.log(np.array([1.0, 2.0, 3.0])))
    np.testing.assert_allclose(third, [1 / 6, 2 / 6, 3 / 6], rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, st.integers(1, 12), elements=st.floats(-40, 40, width=32)))
def test_softmax_is_a_distribution(v):
    p = softmax_array(v)
    assert np.all(p > 0) and np.all(p <= 1)
    assert abs(float(p.sum()) - 1.0) < 1e-6


def test_adamw_zero_grad_no_decay_is_identity():
    p = np.array([0.3, -1.2], dtype=np.float32)
    state = OptimizerState(lr=0.1, weight_decay=0.0)
    (new,), _ = adamw_step([p], [np.zeros_like(p)], state)
    np.testing.assert_array_equal(new, p)


def test_adamw_first_step():
    state = OptimizerState(lr=0.1, weight_decay=0.0)
    (new,), state = adamw_step([np.array([0.0])], [np.array([1.0])], state)
    # m_hat = v_hat = 1 -> step = lr * 1 / (1 + eps)
    assert new[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)
    assert state.step == 1


def test_adamw_decoupled_decay():
    state = OptimizerState(lr=0.1, weight_decay=1e-2)
    (new,), _ = adamw_step([np.array([1.0])], [np.array([0.0])], state)
    assert new[0] == pytest.approx(0.999, abs=1e-12)


def test_adamw_shape_mismatch():
    with pytest.raises(ValueError):
        adamw_step([np.zeros(2)], [np.zeros(3)], OptimizerState())


def test_adamw_wrapper_lr_zero_is_bit_exact():
    p = Tensor(np.random.default_rng(0).normal(size=5), requires_grad=True)
    before = p.data.copy()
    opt = AdamW([p], lr=0.0)
    p.grad = np.ones(5, dtype=np.float32)
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adamw_matches_reference_over_steps():
    # reference written from the textbook update, in float64
    rng = np.random.default_rng(4)
    p = rng.normal(size=3)
    ref = p.copy()
    m = np.zeros(3)
    v = np.zeros(3)
    state = OptimizerState(lr=0.01, weight_decay=0.05)
    for t in range(1, 6):
        g = rng.normal(size=3)
        (p,), state = adamw_step([p], [g], state)
        ref = ref * (1 - 0.01 * 0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_determinism():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 8, 8, 3)).astype(np.float32)
    w = rng.normal(size=(3, 3, 3, 4)).astype(np.float32)
    a = ops.conv2d(Tensor(x), Tensor(w)).data
    b = ops.conv2d(Tensor(x), Tensor(w)).data
    assert a.tobytes() == b.tobytes()
