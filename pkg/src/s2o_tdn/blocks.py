"""Residual block variants: plain, third-order finite difference (TFD), RK2 and Poly2.

The TFD update advances three consecutive layer states::

    w3 = w2 + 7/2 (w2 - w1) - 11/2 (w1 - w0) + 3/2 f(w2)

A block only receives one input, so the first two states are bootstrapped
with plain residual sub-steps: ``w1 = w0 + f1(w0)``, ``w2 = w1 + f2(w1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .autograd import Conv2d, Module, Tensor, relu
from .errors import DimensionError

TFD_PREV = 7.0 / 2.0
TFD_PREV2 = 11.0 / 2.0
TFD_RESIDUAL = 3.0 / 2.0


class BlockKind(str, Enum):
    PLAIN = "plain"
    TFD = "tfd"
    RK2 = "rk2"
    POLY2 = "poly2"


# residual functions each kind owns; rk2 and poly2 reuse f1 for both evaluations
BLOCK_MEMBERS = {
    BlockKind.PLAIN: ("f1",),
    BlockKind.TFD: ("f1", "f2", "f3"),
    BlockKind.RK2: ("f1",),
    BlockKind.POLY2: ("f1",),
}


@dataclass(frozen=True)
class TfdState:
    w_j: Tensor
    w_j1: Tensor
    w_j2: Tensor

    def __post_init__(self):
        shapes = {tuple(np.shape(t.data)) for t in (self.w_j, self.w_j1, self.w_j2)}
        if len(shapes) != 1:
            raise DimensionError(f"TFD states must share one shape, got {sorted(shapes)}")

    def advance(self, w_j3: Tensor) -> "TfdState":
        return TfdState(self.w_j1, self.w_j2, w_j3)


class ResidualFn(Module):
    """conv3x3 -> relu -> conv3x3, channel preserving."""

    def __init__(self, channels: int, *, rng, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.conv2(relu(self.conv1(x)))


def _apply(f: Callable, x: Tensor) -> Tensor:
    y = Tensor.ensure(f(x), x)
    if y.shape != x.shape:
        if y.size == 1:
            return y  # scalar residual broadcasts (handy for closed-form checks)
        raise DimensionError(f"residual function changed shape {x.shape} -> {y.shape}")
    return y


def tfd_step(state: TfdState, f: Callable) -> Tensor:
    w0, w1, w2 = state.w_j, state.w_j1, state.w_j2
    return w2 + TFD_PREV * (w2 - w1) - TFD_PREV2 * (w1 - w0) + TFD_RESIDUAL * _apply(f, w2)


def tfd_block_forward(x: Tensor, f1: Callable, f2: Callable, f3: Callable) -> Tensor:
    w1 = x + _apply(f1, x)
    w2 = w1 + _apply(f2, w1)
    return tfd_step(TfdState(x, w1, w2), f3)


def rk2_step(x: Tensor, f: Callable) -> Tensor:
    k1 = _apply(f, x)
    k2 = _apply(f, x + k1)
    return x + 0.5 * (k1 + k2)


def poly2_step(x: Tensor, f: Callable) -> Tensor:
    k1 = _apply(f, x)
    return x + k1 + _apply(f, k1)


def plain_residual_step(x: Tensor, f: Callable) -> Tensor:
    return x + _apply(f, x)


class ResidualBlock(Module):
    def __init__(self, channels: int, kind: BlockKind | str = BlockKind.TFD, *, rng, dtype=np.float32):
        super().__init__()
        self.kind = BlockKind(kind)
        for name in BLOCK_MEMBERS[self.kind]:
            setattr(self, name, ResidualFn(channels, rng=rng, dtype=dtype))

    def forward(self, x):
        if self.kind is BlockKind.TFD:
            return tfd_block_forward(x, self.f1, self.f2, self.f3)
        if self.kind is BlockKind.RK2:
            return rk2_step(x, self.f1)
        if self.kind is BlockKind.POLY2:
            return poly2_step(x, self.f1)
        return plain_residual_step(x, self.f1)
