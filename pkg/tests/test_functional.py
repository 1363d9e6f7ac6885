import numpy as np
import pytest
from conftest import naive_conv2d
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from s2o_tdn.autograd import (
    Downsample,
    Tensor,
    Upsample,
    activation,
    conv2d,
    count_macs,
    instance_norm,
    leaky_relu,
    relu,
    tanh,
    upsample_nearest2,
)
from s2o_tdn.autograd.functional import pad_edge
from s2o_tdn.errors import DimensionError

F64 = np.float64


def t(x, grad=False):
    return Tensor(np.asarray(x, dtype=F64), requires_grad=grad)


SMALL = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])


# -- conv2d --------------------------------------------------------------------

def test_conv_one_by_one_identity():
    out = conv2d(t(SMALL), t(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, SMALL)


def test_conv_one_by_one_scale():
    out = conv2d(t(SMALL), t(np.full((1, 1, 1, 1), 2.0)))
    np.testing.assert_array_equal(out.data[0, 0], [[2, 4], [6, 8]])


def test_conv_all_ones_padded_counts_overlap():
    out = conv2d(t(np.ones((1, 1, 3, 3))), t(np.ones((1, 1, 3, 3))), padding=1).data[0, 0]
    assert out[1, 1] == 9
    assert out[0, 0] == out[0, 2] == out[2, 0] == out[2, 2] == 4
    assert out[0, 1] == 6


def test_conv_is_cross_correlation():
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 0, 0] = 1.0  # picks the up-left neighbour, no flip
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = conv2d(t(x), t(w), padding=1).data[0, 0]
    assert out[2, 2] == x[0, 0, 1, 1]


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 1), (1, 3, 7), (2, 3, 7)])
def test_conv_matches_naive_loop(rng, stride, padding, k):
    x = rng.normal(size=(2, 3, 9, 8))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    out = conv2d(t(x), t(w), t(b), stride, padding)
    np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, stride, padding), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("shape", [(1, 2, 5, 5), (2, 2, 20, 20)])
def test_conv_backward_is_adjoint(rng, shape):
    # <conv(x), g> = <x, conv^T(g)>: both backward code paths against the forward map
    x = rng.normal(size=shape)
    w = rng.normal(size=(3, 2, 3, 3))
    xt = t(x, True)
    out = conv2d(xt, t(w), None, 1, 1)
    g = rng.normal(size=out.shape)
    (out * t(g)).sum().backward()
    probe = rng.normal(size=x.shape)
    lhs = np.sum(conv2d(t(probe), t(w), None, 1, 1).data * g)
    np.testing.assert_allclose(lhs, np.sum(probe * xt.grad), rtol=1e-10)


@pytest.mark.parametrize("h", [5, 24])
def test_identity_kernel_forward_and_backward(rng, h):
    x = rng.normal(size=(1, 2, h, h))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    xt = t(x, True)
    out = conv2d(xt, t(w), None, 1, 1)
    np.testing.assert_array_equal(out.data, x)
    g = rng.normal(size=x.shape)
    (out * t(g)).sum().backward()
    np.testing.assert_array_equal(xt.grad, g)


def test_conv_output_size_rule():
    out = conv2d(t(np.ones((1, 1, 7, 6))), t(np.ones((2, 1, 3, 3))), stride=2, padding=1)
    assert out.shape == (1, 2, (7 + 2 - 3) // 2 + 1, (6 + 2 - 3) // 2 + 1)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(t(np.ones((1, 2, 4, 4))), t(np.ones((1, 3, 3, 3))))


def test_conv_bad_bias_shape():
    with pytest.raises(DimensionError):
        conv2d(t(np.ones((1, 1, 4, 4))), t(np.ones((2, 1, 3, 3))), t(np.ones(3)))


@pytest.mark.parametrize("stride,padding", [(0, 0), (1, -1), (-2, 1)])
def test_conv_bad_arguments(stride, padding):
    with pytest.raises(ValueError):
        conv2d(t(np.ones((1, 1, 4, 4))), t(np.ones((1, 1, 3, 3))), stride=stride, padding=padding)


def test_conv_too_small():
    with pytest.raises(DimensionError):
        conv2d(t(np.ones((1, 1, 2, 2))), t(np.ones((1, 1, 3, 3))))


def test_count_macs():
    with count_macs() as box:
        conv2d(t(np.ones((2, 3, 4, 4))), t(np.ones((5, 3, 3, 3))), padding=1)
    assert box[0] == 2 * 5 * 3 * 9 * 16


def test_conv_preserves_float32():
    x = Tensor(np.ones((1, 1, 4, 4), dtype=np.float32))
    w = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    assert conv2d(x, w, padding=1).dtype == np.float32


# -- activations ---------------------------------------------------------------

def test_relu_values():
    np.testing.assert_array_equal(relu(t([-1.0, 0.0, 2.0])).data, [0, 0, 2])


def test_relu_subgradient_zero_at_kink():
    x = t([0.0, 1.0], True)
    relu(x).sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_tanh_zero():
    assert tanh(t([0.0])).data[0] == 0.0


def test_leaky_relu_negative_slope():
    assert leaky_relu(t([-10.0])).data[0] == -2.0
    assert leaky_relu(t([3.0])).data[0] == 3.0


def test_activation_dispatch():
    x = t([-1.0, 0.5])
    np.testing.assert_array_equal(activation(x, "relu").data, relu(x).data)
    with pytest.raises(ValueError):
        activation(x, "gelu")


# -- instance_norm -------------------------------------------------------------

def test_instance_norm_constant_slice_is_zero():
    out = instance_norm(t(np.full((1, 1, 3, 3), 7.0)), t([1.0]), t([0.0]))
    np.testing.assert_array_equal(out.data, 0.0)


def test_instance_norm_two_point_slice():
    out = instance_norm(t([[[[-1.0, 1.0]]]]), t([1.0]), t([0.0]), eps=1e-14)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-12)


def test_instance_norm_zero_gamma_gives_beta(rng):
    out = instance_norm(t(rng.normal(size=(2, 2, 4, 4))), t([0.0, 0.0]), t([0.3, -1.2]))
    np.testing.assert_array_equal(out.data[:, 0], 0.3)
    np.testing.assert_array_equal(out.data[:, 1], -1.2)


def test_instance_norm_shape_errors():
    with pytest.raises(DimensionError):
        instance_norm(t(np.ones((1, 1, 1, 1))), t([1.0]), t([0.0]))
    with pytest.raises(DimensionError):
        instance_norm(t(np.ones((1, 2, 2, 2))), t([1.0]), t([0.0]))


@given(
    arrays(F64, (2, 3, 5, 4), elements=st.floats(-50, 50)),
    arrays(F64, (3,), elements=st.floats(-3, 3)),
    arrays(F64, (3,), elements=st.floats(-3, 3)),
)
def test_instance_norm_moments(x, gamma, beta):
    var = x.var(axis=(2, 3))
    out = instance_norm(t(x), t(gamma), t(beta)).data
    for b in range(2):
        for c in range(3):
            if var[b, c] < 1e-2:  # variance must dominate eps
                continue
            s = out[b, c]
            assert abs(s.mean() - beta[c]) < 1e-6
            assert abs(s.std() - abs(gamma[c])) < 1e-3


# -- resampling ----------------------------------------------------------------

def test_nearest_upsample():
    out = upsample_nearest2(t(SMALL)).data[0, 0]
    np.testing.assert_array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])


def test_nearest_upsample_backward_sums_blocks():
    x = t(SMALL, True)
    upsample_nearest2(x).sum().backward()
    np.testing.assert_array_equal(x.grad, np.full_like(SMALL, 4.0))


def test_two_down_then_two_up_stages(rng):
    r = lambda k: np.random.default_rng(k)  # noqa: E731
    x = t(rng.normal(size=(1, 3, 64, 64)))
    d = Downsample(4, 8, rng=r(1), dtype=F64)(Downsample(3, 4, rng=r(0), dtype=F64)(x))
    assert d.shape == (1, 8, 16, 16)
    u = Upsample(4, 3, rng=r(3), dtype=F64)(Upsample(8, 4, rng=r(2), dtype=F64)(d))
    assert u.shape == (1, 3, 64, 64)


def test_downsample_odd_extent():
    with pytest.raises(DimensionError):
        Downsample(1, 2, rng=np.random.default_rng(0), dtype=F64)(t(np.ones((1, 1, 5, 6))))


def test_pad_edge_replicates_border():
    out = pad_edge(t(SMALL), 1).data[0, 0]
    np.testing.assert_array_equal(out[0], [1, 1, 2, 2])
    np.testing.assert_array_equal(out[:, 0], [1, 1, 3, 3])


# -- finiteness fuzz -----------------------------------------------------------

@given(arrays(F64, (1, 2, 6, 6), elements=st.floats(-1e3, 1e3)))
def test_forward_ops_finite_on_finite_input(x):
    w = np.random.default_rng(0).normal(size=(2, 2, 3, 3))
    xt = t(x)
    outs = [
        conv2d(xt, t(w), None, 1, 1), relu(xt), leaky_relu(xt), tanh(xt),
        instance_norm(xt, t([1.0, 2.0]), t([0.0, 1.0])), upsample_nearest2(xt), pad_edge(xt, 2),
    ]
    for o in outs:
        assert np.all(np.isfinite(o.data))
