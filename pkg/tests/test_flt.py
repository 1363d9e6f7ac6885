import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from s2o_tdn.autograd import Tensor, grad_check
from s2o_tdn.errors import DimensionError
from s2o_tdn.flt import (
    W_X,
    W_Y,
    BackboneFusion,
    BranchWiring,
    FltBranch,
    FusionBlock,
    flt_branch_forward,
    flt_head,
    flt_responses,
    fuse_into_backbone,
    phi,
)

F64 = np.float64


def img(a, dtype=F64):
    a = np.asarray(a, dtype=dtype)
    return Tensor(a.reshape((1, 1) + a.shape) if a.ndim == 2 else a)


def zero_params(module):
    for p in module.parameters():
        p.data[...] = 0.0
    return module


def test_kernels_sum_to_zero():
    assert W_X.sum() == 0 and W_Y.sum() == 0


@pytest.mark.parametrize("shape", [(3, 3), (6, 9), (16, 16)])
def test_constant_image_gives_exact_zero_everywhere(shape):
    out = flt_head(img(np.full(shape, 0.37)))
    assert np.all(out.data == 0.0)


def test_horizontal_ramp_interior_minus_two():
    r, c = np.mgrid[0:8, 0:8]
    dx, dy = flt_responses(img(c.astype(F64)))
    assert np.all(dy.data[0, 0, 1:-1, 1:-1] == 2.0)
    assert np.all(dx.data[0, 0, 1:-1, 1:-1] == 0.0)
    assert np.all(flt_head(img(c.astype(F64))).data[0, 0, 1:-1, 1:-1] == -2.0)


def test_row_index_ramp_sign():
    # W_x takes the row above minus the row below, so a top-down increasing ramp gives +2
    r, _ = np.mgrid[0:8, 0:8]
    assert np.all(flt_head(img(r.astype(F64))).data[0, 0, 1:-1, 1:-1] == 2.0)


def test_upward_ramp_interior_minus_two():
    r, _ = np.mgrid[0:8, 0:8]
    assert np.all(flt_head(img((7 - r).astype(F64))).data[0, 0, 1:-1, 1:-1] == -2.0)


def test_delta_response():
    d = np.zeros((5, 5))
    d[2, 2] = 1.0
    dx = flt_responses(img(d))[0].data[0, 0]
    expected = np.zeros((5, 5))
    expected[1, 2], expected[3, 2] = -1.0, 1.0
    np.testing.assert_array_equal(dx[1:-1, 1:-1], expected[1:-1, 1:-1])


def test_border_matches_replicate_padding_by_hand():
    a = np.arange(12.0).reshape(3, 4) ** 1.5
    p = np.pad(a, 1, mode="edge")
    by_hand = -((p[:-2, 1:-1] - p[2:, 1:-1]) + (p[1:-1, 2:] - p[1:-1, :-2]))
    np.testing.assert_array_equal(flt_head(img(a)).data[0, 0], by_hand)


def test_head_is_per_channel(rng):
    x = rng.normal(size=(2, 3, 6, 6))
    out = flt_head(Tensor(x)).data
    for c in range(3):
        np.testing.assert_array_equal(out[:, c : c + 1], flt_head(Tensor(x[:, c : c + 1])).data)


def test_phi_averages_channels(rng):
    x = rng.normal(size=(1, 3, 5, 5))
    np.testing.assert_allclose(phi(Tensor(x)).data[:, 0], flt_head(Tensor(x)).data.mean(axis=1))


def test_head_too_small():
    with pytest.raises(DimensionError):
        flt_head(img(np.ones((2, 5))))


def test_head_has_no_parameters_and_gradient_checks():
    x = np.random.default_rng(0).normal(size=(1, 2, 5, 5))
    assert grad_check(lambda t: (flt_head(t) * flt_head(t)).sum(), x).passed


@given(
    arrays(np.float32, (1, 2, 6, 7), elements=st.floats(-1, 1, width=32)),
    arrays(np.float32, (1, 2, 6, 7), elements=st.floats(-1, 1, width=32)),
    st.floats(-2, 2, width=32),
    st.floats(-2, 2, width=32),
)
def test_head_linearity_float32(a, b, alpha, beta):
    alpha, beta = np.float32(alpha), np.float32(beta)
    lhs = flt_head(Tensor(alpha * a + beta * b)).data
    rhs = alpha * flt_head(Tensor(a)).data + beta * flt_head(Tensor(b)).data
    assert np.max(np.abs(lhs - rhs)) < 1e-6 * 8


@given(arrays(F64, (5, 7), elements=st.floats(-10, 10)))
def test_horizontal_response_telescopes(a):
    dy = flt_responses(img(a))[1].data[0, 0]
    interior_cols = dy[:, 1:-1].sum()
    boundary = (a[:, -1] + a[:, -2] - a[:, 0] - a[:, 1]).sum()
    assert abs(interior_cols - boundary) < 1e-9 * max(1.0, np.abs(a).sum())


# -- fusion and branch ---------------------------------------------------------

def make_branch(seed=0, dtype=F64):
    return FltBranch(1, 2, 8, rng=np.random.default_rng(seed), dtype=dtype)


def test_fusion_block_shape_and_mismatch():
    fb = FusionBlock(4, 3, rng=np.random.default_rng(0), dtype=F64)
    out = fb(Tensor(np.ones((1, 4, 6, 6))), Tensor(np.ones((1, 3, 6, 6))))
    assert out.shape == (1, 4, 6, 6)
    with pytest.raises(DimensionError):
        fb(Tensor(np.ones((1, 4, 6, 6))), Tensor(np.ones((1, 3, 5, 6))))


def test_branch_output_shapes():
    branch = FltBranch(1, 4, 16, rng=np.random.default_rng(0), dtype=F64)
    blocks = [Tensor(np.zeros((1, 16, 16, 16)))] * 3
    out = flt_branch_forward(branch, Tensor(np.zeros((1, 1, 64, 64))), blocks)
    assert out.flt_image.shape == (1, 1, 64, 64)
    assert out.fused_feature.shape == (1, 16, 16, 16)


def test_zero_weights_give_zero_flt_image(rng):
    branch = zero_params(make_branch())
    blocks = [Tensor(rng.normal(size=(1, 8, 4, 4))) for _ in range(3)]
    out = branch(Tensor(rng.normal(size=(1, 1, 16, 16))), blocks)
    assert np.all(out.flt_image.data == 0.0)


def test_wiring_a_equals_b_on_constant_input(rng):
    branch = make_branch(3)
    blocks = [Tensor(rng.normal(size=(1, 8, 4, 4))) for _ in range(3)]
    x = Tensor(np.full((1, 1, 16, 16), 0.4))
    a = branch(x, blocks, BranchWiring.DEFAULT_A)
    b = branch(x, blocks, BranchWiring.BACKBONE_INPUT_RESIDUAL_B)
    np.testing.assert_array_equal(a.flt_image.data, b.flt_image.data)
    np.testing.assert_array_equal(a.fused_feature.data, b.fused_feature.data)


def test_wiring_c_differs_on_nonconstant_input(rng):
    branch = make_branch(3)
    blocks = [Tensor(rng.normal(size=(1, 8, 4, 4))) for _ in range(3)]
    x = Tensor(rng.normal(size=(1, 1, 16, 16)))
    a = branch(x, blocks, BranchWiring.DEFAULT_A)
    c = branch(x, blocks, BranchWiring.BRANCH_INPUT_RESIDUAL_C)
    assert not np.array_equal(a.flt_image.data, c.flt_image.data)


def test_branch_misaligned_blocks():
    with pytest.raises(DimensionError):
        make_branch()(Tensor(np.zeros((1, 1, 16, 16))), [Tensor(np.zeros((1, 8, 8, 8)))] * 3)


def test_branch_needs_block_outputs():
    with pytest.raises(ValueError):
        make_branch()(Tensor(np.zeros((1, 1, 16, 16))), [])


def test_backbone_fusion_contract(rng):
    fusion = BackboneFusion(8, 4, 8, rng=np.random.default_rng(1), dtype=F64)
    feat = Tensor(rng.normal(size=(1, 8, 16, 16)), requires_grad=True)
    flt = Tensor(rng.normal(size=(1, 1, 64, 64)), requires_grad=True)
    side = Tensor(rng.normal(size=(1, 8, 16, 16)))
    out = fuse_into_backbone(fusion, feat, flt, side)
    assert out.shape == feat.shape
    (out * Tensor(rng.normal(size=out.shape))).sum().backward()
    assert np.abs(feat.grad).max() > 0 and np.abs(flt.grad).max() > 0


def test_backbone_fusion_zero_weights():
    fusion = zero_params(BackboneFusion(8, 4, 8, rng=np.random.default_rng(1), dtype=F64))
    out = fusion(Tensor(np.ones((1, 8, 4, 4))), Tensor(np.ones((1, 1, 16, 16))), Tensor(np.ones((1, 8, 4, 4))))
    assert np.all(out.data == 0.0)
