"""FLT-guided branch: fixed derivative head, fusion blocks and side-output image.

The head computes ``-(dP/dx + dP/dy)`` with two frozen 3x3 stencils applied per
channel (cross-correlation)::

    W_x = [[0, 1, 0],      W_y = [[ 0, 0, 0],
           [0, 0, 0],             [-1, 0, 1],
           [0,-1, 0]]             [ 0, 0, 0]]

Borders are replicate-padded so that a constant image maps to exactly zero
everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .autograd import Conv2d, Downsample, Module, Tensor, Upsample, concat, conv2d, relu
from .autograd.functional import pad_edge
from .autograd.nn import conv_norm_act
from .errors import DimensionError

W_X = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
W_Y = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])


class BranchWiring(str, Enum):
    DEFAULT_A = "a"
    BACKBONE_INPUT_RESIDUAL_B = "b"
    BRANCH_INPUT_RESIDUAL_C = "c"


def _stencil(image: Tensor, kernel: np.ndarray) -> Tensor:
    b, c, h, w = image.shape
    flat = image.reshape(b * c, 1, h, w)
    k = Tensor(kernel.astype(image.dtype)[None, None])
    return conv2d(pad_edge(flat, 1), k).reshape(b, c, h, w)


def flt_responses(image: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel ``(W_x, W_y)`` responses, replicate padded."""
    if image.ndim != 4:
        raise DimensionError(f"expected (B, C, H, W), got {image.shape}")
    if image.shape[2] < 3 or image.shape[3] < 3:
        raise DimensionError(f"FLT head needs at least 3x3 pixels, got {image.shape[2:]}")
    return _stencil(image, W_X), _stencil(image, W_Y)


def flt_head(image: Tensor) -> Tensor:
    dx, dy = flt_responses(image)
    return -(dx + dy)


def phi(image: Tensor) -> Tensor:
    """Channel-averaged FLT head response, shape (B, 1, H, W)."""
    return flt_head(image).mean(axis=1, keepdims=True)


class FusionBlock(Module):
    """Concatenate a secondary feature onto the primary one and mix with three 3x3 convs."""

    def __init__(self, primary: int, secondary: int, *, rng, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv2d(primary + secondary, primary, 3, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(primary, primary, 3, rng=rng, dtype=dtype)
        self.conv3 = Conv2d(primary, primary, 3, rng=rng, dtype=dtype)

    def forward(self, primary: Tensor, secondary: Tensor) -> Tensor:
        if primary.shape[0] != secondary.shape[0] or primary.shape[2:] != secondary.shape[2:]:
            raise DimensionError(f"cannot fuse {secondary.shape} into {primary.shape}")
        x = concat([primary, secondary], axis=1)
        return self.conv3(relu(self.conv2(relu(self.conv1(x)))))


@dataclass
class BranchOutput:
    flt_image: Tensor
    fused_feature: Tensor


class FltBranch(Module):
    def __init__(self, in_channels: int, base: int, feature: int, *, rng, dtype=np.float32):
        super().__init__()
        self.stem = conv_norm_act(in_channels, base, 3, rng=rng, dtype=dtype)
        self.down1 = Downsample(base, 2 * base, rng=rng, dtype=dtype)
        self.down2 = Downsample(2 * base, feature, rng=rng, dtype=dtype)
        self.fuse1 = FusionBlock(feature, feature, rng=rng, dtype=dtype)
        self.fuse2 = FusionBlock(feature, feature, rng=rng, dtype=dtype)
        self.up1 = Upsample(feature, 2 * base, rng=rng, dtype=dtype)
        self.up2 = Upsample(2 * base, base, rng=rng, dtype=dtype)
        self.predict = Conv2d(base, 1, 3, rng=rng, dtype=dtype)

    def forward(self, image: Tensor, block_outputs: Sequence[Tensor], wiring=BranchWiring.DEFAULT_A, head: Tensor | None = None) -> BranchOutput:
        wiring = BranchWiring(wiring)
        if head is None:
            head = flt_head(image)
        x = image + head if wiring is BranchWiring.BRANCH_INPUT_RESIDUAL_C else head
        feat = self.down2(self.down1(self.stem(x)))
        if not block_outputs:
            raise ValueError("need at least one backbone block output")
        late = list(block_outputs[-2:]) if len(block_outputs) >= 2 else [block_outputs[0]] * 2
        for fuse, bout in zip((self.fuse1, self.fuse2), late):
            if bout.shape[2:] != feat.shape[2:]:
                raise DimensionError(f"block output {bout.shape} not aligned with branch grid {feat.shape}")
            feat = fuse(feat, bout)
        flt_image = self.predict(self.up2(self.up1(feat)))
        return BranchOutput(flt_image, feat)


def flt_branch_forward(branch: FltBranch, image: Tensor, block_outputs, wiring=BranchWiring.DEFAULT_A) -> BranchOutput:
    return branch(image, block_outputs, wiring)


class BackboneFusion(Module):
    """Projects the FLT-guided image onto the feature grid and fuses it into the backbone."""

    def __init__(self, feature: int, base: int, branch_feature: int, *, rng, dtype=np.float32):
        super().__init__()
        self.proj1 = Conv2d(1, base, 3, stride=2, rng=rng, dtype=dtype)
        self.proj2 = Conv2d(base, base, 3, stride=2, rng=rng, dtype=dtype)
        self.fuse = FusionBlock(feature, base + branch_feature, rng=rng, dtype=dtype)

    def project(self, flt_image: Tensor) -> Tensor:
        return relu(self.proj2(relu(self.proj1(flt_image))))

    def forward(self, backbone_feature: Tensor, flt_image: Tensor, fused_feature: Tensor) -> Tensor:
        side = concat([self.project(flt_image), fused_feature], axis=1)
        return self.fuse(backbone_feature, side)


def fuse_into_backbone(fusion: BackboneFusion, backbone_feature: Tensor, flt_image: Tensor, fused_feature: Tensor) -> Tensor:
    return fusion(backbone_feature, flt_image, fused_feature)
