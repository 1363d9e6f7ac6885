import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from s2o_tdn.autograd import Tensor, concat, is_grad_enabled, no_grad
from s2o_tdn.autograd.tensor import stack_sum, unbroadcast
from s2o_tdn.errors import DimensionError, EmptyTapeError

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def test_sum_grad_is_ones():
    w = leaf(np.arange(6.0).reshape(2, 3))
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, np.ones((2, 3)))


def test_square_grad():
    w = leaf([1.0, 2.0])
    (w * w).sum().backward()
    np.testing.assert_array_equal(w.grad, [2.0, 4.0])


def test_product_rule_routes_to_both_factors():
    a, b = leaf([1.0, -2.0, 3.0]), leaf([4.0, 5.0, -6.0])
    (a * b).sum().backward()
    np.testing.assert_array_equal(a.grad, b.data)
    np.testing.assert_array_equal(b.grad, a.data)


def test_repeated_backward_accumulates():
    w = leaf([1.0, 2.0])
    (w * 3.0).sum().backward()
    (w * 3.0).sum().backward()
    np.testing.assert_array_equal(w.grad, [6.0, 6.0])
    w.zero_grad()
    assert w.grad is None


def test_diamond_graph_accumulates_both_paths():
    x = leaf([2.0])
    a = x * 3.0
    b = x * x
    (a + b).sum().backward()
    # d/dx (3x + x^2) = 3 + 2x
    np.testing.assert_allclose(x.grad, [3.0 + 4.0])


def test_fan_out_into_same_op():
    x = leaf([1.5, -0.5])
    (x * x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 3 * x.data**2)


def test_backward_non_scalar_raises():
    with pytest.raises(ValueError):
        leaf([1.0, 2.0]).backward()


def test_backward_on_detached_raises():
    loss = (leaf([1.0]) * 2).sum().detach()
    with pytest.raises(EmptyTapeError):
        loss.backward()


def test_no_grad_records_nothing():
    w = leaf([1.0])
    with no_grad():
        assert not is_grad_enabled()
        y = w * 2
    assert is_grad_enabled()
    assert not y.requires_grad


def test_no_grad_is_thread_local():
    seen = []
    with no_grad():
        t = threading.Thread(target=lambda: seen.append(is_grad_enabled()))
        t.start()
        t.join()
    assert seen == [True]


def test_deep_chain_does_not_recurse():
    x = leaf([1.0])
    y = x
    for _ in range(5000):
        y = y + 1.0
    y.sum().backward()
    assert x.grad[0] == 1.0


def test_division_and_power():
    x = leaf([2.0, 4.0])
    (1.0 / x + x**3).sum().backward()
    np.testing.assert_allclose(x.grad, -1.0 / x.data**2 + 3 * x.data**2)


def test_abs_subgradient_zero_at_zero():
    x = leaf([-2.0, 0.0, 3.0])
    x.abs().sum().backward()
    np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])


def test_getitem_scatter_back():
    x = leaf(np.arange(5.0))
    (x[np.array([0, 0, 3])] * 1.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [2, 0, 0, 1, 0])


def test_take_edge_indices():
    x = leaf(np.arange(3.0))
    x.take(np.array([0, 0, 1, 2, 2]), axis=0).sum().backward()
    np.testing.assert_array_equal(x.grad, [2, 1, 2])


def test_reshape_transpose_roundtrip_grad():
    x = leaf(np.arange(6.0))
    y = x.reshape(2, 3).transpose(1, 0)
    (y * Tensor(np.arange(6.0).reshape(3, 2))).sum().backward()
    np.testing.assert_array_equal(x.grad, np.arange(6.0).reshape(3, 2).T.reshape(-1))


def test_mean_grad():
    x = leaf(np.ones((2, 4)))
    x.mean(axis=1).sum().backward()
    np.testing.assert_allclose(x.grad, np.full((2, 4), 0.25))


def test_concat_splits_gradient():
    a, b = leaf(np.ones((1, 2, 2, 2))), leaf(np.ones((1, 3, 2, 2)))
    out = concat([a, b], axis=1)
    assert out.shape == (1, 5, 2, 2)
    (out * Tensor(np.arange(5.0)[None, :, None, None])).sum().backward()
    np.testing.assert_array_equal(a.grad[0, :, 0, 0], [0, 1])
    np.testing.assert_array_equal(b.grad[0, :, 0, 0], [2, 3, 4])


def test_concat_mismatch():
    with pytest.raises(DimensionError):
        concat([Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 2)))], axis=1)


def test_stack_sum():
    xs = [leaf([1.0]), leaf([2.0])]
    stack_sum(xs).sum().backward()
    assert xs[0].grad[0] == 1.0 and stack_sum(xs).item() == 3.0


def test_integer_input_promoted_to_float64():
    assert Tensor(np.arange(3)).dtype == np.float64


def test_rejects_half_precision():
    with pytest.raises(TypeError):
        Tensor(np.ones(3), dtype=np.float16)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_broadcast_add_grads_sum_over_broadcast_axes(a, b):
    ta, tb = leaf(a), leaf(b)
    (ta + tb).sum().backward()
    np.testing.assert_array_equal(ta.grad, np.ones_like(a))
    np.testing.assert_array_equal(tb.grad, np.full_like(b, 3.0))


@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 1), elements=finite))
def test_broadcast_mul_grad_matches_closed_form(a, b):
    ta, tb = leaf(a), leaf(b)
    (ta * tb).sum().backward()
    np.testing.assert_allclose(ta.grad, np.broadcast_to(b, a.shape))
    np.testing.assert_allclose(tb.grad, a.sum(axis=1, keepdims=True))


@given(st.lists(st.integers(1, 3), min_size=1, max_size=3))
def test_unbroadcast_shape(shape):
    shape = tuple(shape)
    g = np.ones((2,) + shape)
    assert unbroadcast(g, shape).shape == shape


@given(arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3)))
def test_forward_ops_stay_finite(x):
    t = Tensor(x)
    for y in (t + t, t * t, t - 1.0, t.abs(), t.mean(), (t * 0.5) ** 2):
        assert np.all(np.isfinite(y.data))


def test_grad_shape_matches_data():
    x = leaf(np.ones((2, 3, 4)))
    (x.sum(axis=(1, 2)) ** 2).sum().backward()
    assert x.grad.shape == x.shape
