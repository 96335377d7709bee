import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cssl_har import numerics as nx
from cssl_har.numerics import Parameter, Tensor

from oracles import conv1d_loop, numeric_grad, rel_error


# --- conv1d -----------------------------------------------------------------

def test_conv_identity_kernel():
    out = nx.conv1d(Tensor([[1.0, 2.0, 3.0]]), Tensor([[[1.0]]]), Tensor([0.0]))
    np.testing.assert_array_equal(out.data, [[1, 2, 3]])


def test_conv_sum_kernel():
    out = nx.conv1d(Tensor([[1.0, 1, 1, 1]]), Tensor([[[1.0, 1.0]]]), Tensor([0.0]))
    np.testing.assert_array_equal(out.data, [[2, 2, 2]])


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(0)
    x, k, b = rng.normal(size=(2, 20)), rng.normal(size=(3, 2, 5)), rng.normal(size=3)
    out = nx.conv1d(Tensor(x), Tensor(k), Tensor(b)).data
    assert np.max(np.abs(out - conv1d_loop(x, k, b))) < 1e-12


def test_conv_batched_equals_per_sample():
    rng = np.random.default_rng(1)
    x, k, b = rng.normal(size=(4, 3, 17)), rng.normal(size=(5, 3, 4)), rng.normal(size=5)
    out = nx.conv1d(Tensor(x), Tensor(k), Tensor(b)).data
    for n in range(4):
        np.testing.assert_allclose(out[n], conv1d_loop(x[n], k, b), atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(nx.ShapeError):
        nx.conv1d(Tensor(np.ones((2, 10))), Tensor(np.ones((1, 3, 2))), Tensor(np.zeros(1)))
    with pytest.raises(nx.ShapeError):
        nx.conv1d(Tensor(np.ones((1, 3))), Tensor(np.ones((1, 1, 4))), Tensor(np.zeros(1)))


# --- backward ---------------------------------------------------------------

def test_relu_sum_gradient():
    x = Parameter([1.0, -1.0])
    nx.backward(nx.relu(x).sum())
    np.testing.assert_array_equal(x.grad, [1.0, 0.0])


def test_uniform_cross_entropy_and_gradient():
    C = 5
    logits = Parameter(np.zeros((1, C)))
    loss = nx.cross_entropy(logits, np.array([0]))
    assert loss.item() == pytest.approx(math.log(C), abs=1e-12)
    nx.backward(loss)
    expected = np.full(C, 1.0 / C)
    expected[0] -= 1.0
    np.testing.assert_allclose(logits.grad[0], expected, atol=1e-12)


def test_backward_rejects_non_scalar_and_unrecorded():
    with pytest.raises(nx.GraphError):
        nx.backward(Parameter(np.ones(3)) * 2.0)
    with pytest.raises(nx.GraphError):
        nx.backward(Tensor(1.0))


def test_no_grad_records_nothing():
    p = Parameter(np.ones(2))
    with nx.no_grad():
        y = (p * 3.0).sum()
    with pytest.raises(nx.GraphError):
        nx.backward(y)


def test_gradients_accumulate_across_backward_calls():
    p = Parameter(np.array([2.0]))
    nx.backward((p * 3.0).sum())
    nx.backward((p * 3.0).sum())
    np.testing.assert_array_equal(p.grad, [6.0])
    nx.zero_grad([p])
    np.testing.assert_array_equal(p.grad, [0.0])


def test_shared_subexpression_gradient():
    p = Parameter(np.array([1.5, -0.5]))
    y = p * p
    nx.backward((y + y).sum())
    np.testing.assert_allclose(p.grad, 4 * p.data)


def _check_op(fn, shapes, seed, positive=False):
    rng = np.random.default_rng(seed)
    params = [Parameter(np.abs(rng.normal(size=s)) + 0.5 if positive else rng.normal(size=s)) for s in shapes]
    weight = rng.normal(size=fn(*[Tensor(p.data) for p in params]).shape)

    def f():
        with nx.no_grad():
            return float((fn(*[Tensor(p.data) for p in params]).data * weight).sum())

    out = fn(*params)
    nx.backward((out * Tensor(weight)).sum())
    for p in params:
        num = numeric_grad(f, p.data)
        assert rel_error(p.grad, num) < 1e-4


OPS = {
    "add_broadcast": (lambda a, b: a + b, [(3, 4), (4,)], False),
    "mul_broadcast": (lambda a, b: a * b, [(3, 4), (3, 1)], False),
    "div": (lambda a, b: a / b, [(3, 4), (3, 4)], True),
    "relu": (nx.relu, [(4, 5)], False),
    "exp": (nx.exp, [(4,)], False),
    "log": (nx.log, [(4,)], True),
    "sum_axis": (lambda a: a.sum(axis=1), [(3, 4)], False),
    "mean_axis": (lambda a: a.mean(axis=0, keepdims=True), [(3, 4)], False),
    "reshape": (lambda a: a.reshape(6, 2), [(3, 4)], False),
    "index": (lambda a: a[np.array([0, 2, 2]), 1:], [(3, 4)], False),
    "concat": (lambda a, b: nx.concat([a, b], axis=1), [(2, 3), (2, 2)], False),
    "max_over": (lambda a: nx.max_over(a, axis=-1), [(2, 3, 7)], False),
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)], False),
    "linear": (nx.linear, [(5, 4), (3, 4), (3,)], False),
    "conv1d": (nx.conv1d, [(2, 3, 12), (4, 3, 5), (4,)], False),
    "log_softmax": (lambda a: nx.log_softmax(a, axis=1), [(3, 5)], False),
    "l2_normalize": (lambda a: nx.l2_normalize(a, axis=1), [(3, 5)], False),
    "cross_entropy": (lambda a: nx.cross_entropy(a, np.array([0, 2, 1])), [(3, 4)], False),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_against_finite_differences(name):
    fn, shapes, positive = OPS[name]
    for seed in range(3):
        _check_op(fn, shapes, seed, positive)


def test_dropout_inverted_scaling_and_eval_identity():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((200, 50)))
    out = nx.dropout(x, 0.1, rng, training=True).data
    assert set(np.unique(out)) <= {0.0, 1.0 / 0.9}
    assert abs(out.mean() - 1.0) < 0.02
    assert nx.dropout(x, 0.1, rng, training=False) is x


def test_l2_normalize_zero_norm_raises():
    with pytest.raises(ValueError):
        nx.l2_normalize(Tensor(np.zeros((1, 3))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 6), elements=st.floats(-30, 30)))
def test_log_softmax_rows_normalise(x):
    lp = nx.log_softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(nx.softmax(x, axis=1), np.exp(lp), atol=1e-12)


# --- optimizers -------------------------------------------------------------

def test_sgd_single_step():
    p = Parameter(1.0)
    p.grad = np.array(1.0)
    nx.optimizer_step([p], nx.Optimizer("sgd", 0.1))
    assert p.value == pytest.approx(0.9, abs=1e-15)


def test_frozen_parameter_untouched():
    p = Parameter(1.0, trainable=False)
    p.grad = np.array(1.0)
    nx.optimizer_step([p], nx.Optimizer("sgd", 0.1))
    assert p.value == 1.0


def test_adam_first_step_moves_by_learning_rate():
    p = Parameter(1.0)
    p.grad = np.array(1.0)
    nx.optimizer_step([p], nx.Optimizer("adam", 0.01))
    # bias-corrected m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    assert 1.0 - p.value == pytest.approx(0.01 / (1 + 1e-8), abs=1e-15)


def test_momentum_accumulates():
    p = Parameter(0.0)
    opt = nx.Optimizer("sgd-momentum", 0.1, momentum=0.5)
    for _ in range(2):
        p.grad = np.array(1.0)
        opt.step([p])
    assert p.value == pytest.approx(-(0.1 + 0.15))


def test_weight_decay_adds_to_gradient():
    p = Parameter(2.0)
    p.grad = np.array(0.0)
    nx.Optimizer("sgd", 0.1, weight_decay=0.5).step([p])
    assert p.value == pytest.approx(2.0 - 0.1 * 1.0)


def test_optimizer_rejects_bad_input():
    with pytest.raises(ValueError):
        nx.Optimizer("rmsprop")
    with pytest.raises(ValueError):
        nx.Optimizer("sgd", 0.0)
    p = Parameter(1.0)
    p.grad = np.array(np.nan)
    with pytest.raises(FloatingPointError):
        nx.Optimizer("sgd", 0.1).step([p])


def test_adam_state_resets_when_shape_changes():
    opt = nx.Optimizer("adam", 0.1)
    p = Parameter(np.zeros(2))
    p.grad = np.ones(2)
    opt.step([p])
    p.data = np.zeros(3)
    p.grad = np.ones(3)
    opt.step([p])
    np.testing.assert_allclose(p.data, -0.1 / (1 + 1e-8))


# --- EMA --------------------------------------------------------------------

@pytest.mark.parametrize("m,expected", [(1.0, 1.0), (0.0, 0.0), (0.99, 0.99)])
def test_ema_examples(m, expected):
    t, o = Parameter(1.0), Parameter(0.0)
    nx.ema_update([t], [o], m)
    assert t.value == pytest.approx(expected, abs=1e-15)


def test_ema_errors():
    with pytest.raises(ValueError):
        nx.ema_update([Parameter(1.0)], [Parameter(0.0)], 1.5)
    with pytest.raises(nx.ShapeError):
        nx.ema_update([Parameter(np.ones(2))], [Parameter(np.ones(3))], 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_ema_stays_between_endpoints(m, a, b):
    t = Parameter(a)
    nx.ema_update([t], [Parameter(b)], m)
    assert min(a, b) - 1e-12 <= float(t.value) <= max(a, b) + 1e-12


def test_l2_normalize_floor_clamps_and_differentiates():
    a = Parameter(np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]))
    out = nx.l2_normalize(a, axis=1, floor=1e-12)
    np.testing.assert_array_equal(out.data[0], 0.0)
    np.testing.assert_allclose(out.data[1], [0.6, 0.8, 0.0])
    nx.backward(out.sum())
    assert np.all(np.isfinite(a.grad))
    np.testing.assert_allclose(a.grad[0], 1e12)
