"""Finite-difference checks of every differentiable piece of the model, in 64-bit."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .autograd import (
    Downsample,
    GradCheckReport,
    Tensor,
    Upsample,
    conv2d,
    grad_check,
    grad_check_params,
    instance_norm,
    leaky_relu,
    relu,
    tanh,
    upsample_nearest2,
)
from .blocks import BlockKind, ResidualBlock
from .flt import BranchWiring, FltBranch, flt_branch_forward, flt_head
from .losses import FeatureExtractor, LossWeights, combine, cycle_loss, gan_loss, perceptual_loss, pixel_loss, td_loss
from .model import Generator, GeneratorConfig

F64 = np.float64


def _project(out: Tensor, seed: int) -> Tensor:
    # random linear functional so that no output coordinate cancels another
    r = np.random.default_rng(seed).normal(size=out.shape)
    return (out * Tensor(r)).sum()


def _randomize(module, rng):
    """Fan-in scaled weights and O(1) biases.

    Pre-activations then sit well away from relu kinks, and the output tanh
    stays out of saturation so gradients are large against roundoff.
    """
    for name, p in module.named_parameters():
        if p.ndim == 4:
            p.data[...] = rng.normal(scale=1.0 / np.sqrt(np.prod(p.shape[1:])), size=p.shape)
        elif name.endswith("gamma"):
            p.data[...] = 1.0 + rng.normal(scale=0.2, size=p.shape)
        else:
            p.data[...] = rng.normal(scale=0.5, size=p.shape)
    return module


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def checks(seed: int = 0) -> Iterator[tuple[str, Callable[[], GradCheckReport]]]:
    """Yield ``(name, thunk)`` pairs; calling a thunk runs one check."""
    rng = np.random.default_rng(seed)
    init = lambda k: np.random.default_rng([seed, k])  # noqa: E731

    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    bias = rng.normal(size=4)
    yield "conv2d/input", lambda: grad_check(lambda t: _project(conv2d(t, Tensor(w), Tensor(bias), 1, 1), 1), x)
    yield "conv2d/weight", lambda: grad_check(lambda t: _project(conv2d(Tensor(x), t, Tensor(bias), 2, 1), 2), w)
    yield "conv2d/bias", lambda: grad_check(lambda t: _project(conv2d(Tensor(x), Tensor(w), t, 1, 0), 3), bias)
    big, wbig = rng.normal(size=(1, 2, 18, 18)), rng.normal(size=(2, 2, 3, 3))
    yield "conv2d/input-large", lambda: grad_check(lambda t: _project(conv2d(t, Tensor(wbig), None, 1, 1), 4), big)

    a = _away_from_zero(rng, (3, 7))
    yield "relu", lambda: grad_check(lambda t: _project(relu(t), 5), a)
    yield "leaky_relu", lambda: grad_check(lambda t: _project(leaky_relu(t), 6), a)
    yield "tanh", lambda: grad_check(lambda t: _project(tanh(t), 7), a)

    g, b = rng.normal(size=3), rng.normal(size=3)
    yield "instance_norm/input", lambda: grad_check(lambda t: _project(instance_norm(t, Tensor(g), Tensor(b)), 8), x)
    yield "instance_norm/gamma", lambda: grad_check(lambda t: _project(instance_norm(Tensor(x), t, Tensor(b)), 9), g)
    yield "instance_norm/beta", lambda: grad_check(lambda t: _project(instance_norm(Tensor(x), Tensor(g), t), 10), b)

    img = rng.normal(size=(1, 2, 8, 8))
    down = _randomize(Downsample(2, 3, rng=init(1), dtype=F64), init(11))
    up = _randomize(Upsample(2, 3, rng=init(2), dtype=F64), init(12))
    yield "resample/nearest2", lambda: grad_check(lambda t: _project(upsample_nearest2(t), 11), img)
    yield "resample/down", lambda: grad_check(lambda t: _project(down(t), 12), img)
    yield "resample/up", lambda: grad_check(lambda t: _project(up(t), 13), img)

    feat = rng.normal(size=(1, 3, 6, 6))
    for kind in BlockKind:
        block = _randomize(ResidualBlock(3, kind, rng=init(3), dtype=F64), init(13))
        yield f"block/{kind.value}", lambda block=block: grad_check(lambda t: _project(block(t), 14), feat)
        yield f"block/{kind.value}/params", lambda block=block: grad_check_params(
            lambda: _project(block(Tensor(feat)), 15), block.parameters(), n_coords=3, rng=init(4))

    sar = rng.uniform(-1, 1, size=(1, 1, 16, 16))
    yield "flt_head", lambda: grad_check(lambda t: _project(flt_head(t), 16), sar)
    branch = _randomize(FltBranch(1, 2, 8, rng=init(5), dtype=F64), init(15))
    blocks_out = [rng.normal(size=(1, 8, 4, 4)) for _ in range(2)]
    for wiring in BranchWiring:
        def run(t, wiring=wiring):
            out = flt_branch_forward(branch, t, [Tensor(o) for o in blocks_out], wiring)
            return _project(out.flt_image, 17) + _project(out.fused_feature, 18)
        yield f"flt_branch/{wiring.value}", lambda run=run: grad_check(run, sar)

    fake, real = rng.uniform(-1, 1, size=(2, 1, 3, 12, 12))
    flt_img = rng.uniform(-1, 1, size=(1, 1, 12, 12))
    sar_small = rng.uniform(-1, 1, size=(1, 1, 12, 12))
    scores = rng.normal(size=(1, 1, 3, 3))
    ext = FeatureExtractor(dtype=F64)
    yield "loss/pix", lambda: grad_check(lambda t: pixel_loss(t, Tensor(real)), fake)
    yield "loss/cyc", lambda: grad_check(lambda t: cycle_loss(Tensor(sar_small), t), sar_small[..., ::-1].copy())
    yield "loss/gan_real", lambda: grad_check(lambda t: gan_loss(t, True), scores)
    yield "loss/gan_fake", lambda: grad_check(lambda t: gan_loss(t, False), scores)
    yield "loss/per", lambda: grad_check(lambda t: perceptual_loss(t, Tensor(real), ext), fake)
    # a fixed random 3x3 mix in front breaks the exact sign cancellations that the
    # stencil's symmetry produces, which would otherwise leave pure roundoff to compare
    mix = rng.normal(size=(3, 3, 3, 3))
    yield "loss/td_tfd", lambda: grad_check(lambda t: td_loss(Tensor(real), conv2d(t, Tensor(mix), None, 1, 1), Tensor(flt_img))[0], fake)
    yield "loss/td_flt", lambda: grad_check(lambda t: td_loss(Tensor(real), Tensor(fake), t)[1], flt_img)

    def total(t):
        parts = {
            "gan": gan_loss(Tensor(scores), True), "pix": pixel_loss(t, Tensor(real)),
            "per": perceptual_loss(t, Tensor(real), ext), "cyc": cycle_loss(Tensor(sar_small), t.mean(axis=1, keepdims=True)),
        }
        parts["td_tfd"], parts["td_flt"] = td_loss(Tensor(real), t, Tensor(flt_img))
        return combine(parts, LossWeights())
    yield "loss/total", lambda: grad_check(total, fake)

    gen = _randomize(Generator(GeneratorConfig(base_channels=4, num_blocks=1, dtype="float64"), rng=init(6)), init(16))
    sar16 = rng.uniform(-1, 1, size=(1, 1, 16, 16))
    target = rng.uniform(-1, 1, size=(1, 3, 16, 16))

    def gen_loss(t):
        out = gen(t)
        return pixel_loss(out.optical, Tensor(target)) + td_loss(Tensor(target), out.optical, out.flt_image)[1]
    yield "generator/input", lambda: grad_check(gen_loss, sar16)
    yield "generator/params", lambda: grad_check_params(lambda: gen_loss(Tensor(sar16)), gen.parameters(), n_coords=2, rng=init(7))


def run_suite(seed: int = 0) -> list[tuple[str, GradCheckReport]]:
    return [(name, thunk()) for name, thunk in checks(seed)]
