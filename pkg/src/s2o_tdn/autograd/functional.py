"""Differentiable neural-network primitives on :class:`Tensor`.

Convolutions use the cross-correlation convention (no kernel flip) and zero
padding, and are lowered to matrix products via an im2col gather.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .tensor import Tensor

_counter = threading.local()


@contextmanager
def count_macs():
    """Count multiply-accumulates performed by conv2d calls inside the block.

    Yields a one-element list whose entry is updated in place.
    """
    prev = getattr(_counter, "box", None)
    box = [0]
    _counter.box = box
    try:
        yield box
    finally:
        _counter.box = prev


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (B, C, H', W', kh, kw) view, strided to the output grid
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    b, c = xp.shape[:2]
    # rows ordered (c, i, j) to match weight.reshape(Cout, -1); columns (b, y, x)
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, b * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride={stride} / padding={padding}")
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    b, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise DimensionError(f"input has {cin} channels but weight expects {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"bias shape {bias.shape} does not match {cout} output channels")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"input {h}x{w} too small for kernel {kh}x{kw} (padding {padding})")

    box = getattr(_counter, "box", None)
    if box is not None:
        box[0] += b * cout * cin * kh * kw * ho * wo

    xd = x.data
    if padding:
        xp = np.zeros((b, cin, h + 2 * padding, w + 2 * padding), dtype=xd.dtype)
        xp[:, :, padding : padding + h, padding : padding + w] = xd
    else:
        xp = xd
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    w2 = weight.data.reshape(cout, -1)
    out = w2 @ cols
    out = out.reshape(cout, b, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    padded_shape = xp.shape
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            hs, ws = (ho - 1) * stride + 1, (wo - 1) * stride + 1
            hp, wp = padded_shape[2:]
            if stride == 1 and b * ho * wo > 256:
                # full correlation of the output gradient with the flipped kernel
                gd = np.zeros((b, cout, hp + kh - 1, wp + kw - 1), dtype=g.dtype)
                gd[:, :, kh - 1 : kh - 1 + hs, kw - 1 : kw - 1 + ws] = g
                wf = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(cin, -1)
                gxp = (wf @ _im2col(gd, kh, kw, 1, hp, wp)).reshape(cin, b, hp, wp).transpose(1, 0, 2, 3)
            else:
                # column gradient scattered back per kernel offset (col2im)
                gc = (w2.T @ g2).reshape(cin, kh, kw, b, ho, wo)
                gxp = np.zeros((cin, b, hp, wp), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i : i + hs : stride, j : j + ws : stride] += gc[:, i, j]
                gxp = gxp.transpose(1, 0, 2, 3)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return Tensor._make(out, parents, backward, "conv2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return Tensor._make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, 0.2)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize every (batch, channel) slice to zero mean / unit variance, then scale and shift."""
    if x.ndim != 4:
        raise DimensionError(f"instance_norm expects (B, C, H, W), got {x.shape}")
    b, c, h, w = x.shape
    if h * w < 2:
        raise DimensionError("instance_norm needs at least two spatial positions")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"gamma/beta must have shape ({c},)")
    xd = x.data
    mean = xd.mean(axis=(2, 3), keepdims=True)
    centered = xd - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gd = gamma.data[None, :, None, None]
    out = xhat * gd + beta.data[None, :, None, None]
    n = h * w

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gd
            s1 = dxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(2, 3), keepdims=True)
            gx = inv_std * (dxhat - s1 / n - xhat * s2 / n)
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor._make(out, (x, gamma, beta), backward, "instance_norm")


def upsample_nearest2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor._make(out, (x,), backward, "upsample_nearest2")


def pad_edge(x: Tensor, pad: int) -> Tensor:
    """Replicate-pad the two spatial axes by ``pad`` pixels."""
    h, w = x.shape[2], x.shape[3]
    rows = np.clip(np.arange(-pad, h + pad), 0, h - 1)
    cols = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    return x.take(rows, axis=2).take(cols, axis=3)


def channel_mean(x: Tensor) -> Tensor:
    return x.mean(axis=1, keepdims=True)


def check_spatial_even(x: Tensor) -> None:
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        raise DimensionError(f"cannot halve odd spatial extent {h}x{w}")
