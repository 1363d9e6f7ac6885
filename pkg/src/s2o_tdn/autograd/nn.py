"""Module containers and the layers the networks are assembled from."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from ..errors import DimensionError
from . import functional as F
from .tensor import Tensor

INIT_STD = 0.02


class Parameter(Tensor):
    """A trainable leaf tensor. Its dotted name comes from the owning module tree."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, m in self._modules.items():
            yield from m.named_modules(prefix + name + ".")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Sequential(ModuleList):
    def forward(self, x):
        for m in self._items:
            x = m(x)
        return x


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride=1, padding=None, bias=True, *, rng, dtype=np.float32, std=INIT_STD):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = Parameter(rng.normal(0.0, std, size=(cout, cin, kernel, kernel)), dtype=dtype)
        self.bias = Parameter(np.zeros(cout), dtype=dtype) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class InstanceNorm2d(Module):
    def __init__(self, channels, eps=1e-5, *, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(channels), dtype=dtype)
        self.beta = Parameter(np.zeros(channels), dtype=dtype)

    def forward(self, x):
        return F.instance_norm(x, self.gamma, self.beta, self.eps)


class Act(Module):
    def __init__(self, kind="relu"):
        super().__init__()
        self.kind = kind

    def forward(self, x):
        return F.activation(x, self.kind)


def conv_norm_act(cin, cout, kernel, stride=1, *, rng, dtype, act="relu", padding=None):
    # no conv bias: instance norm would subtract it straight back out
    return Sequential([
        Conv2d(cin, cout, kernel, stride, padding, bias=False, rng=rng, dtype=dtype),
        InstanceNorm2d(cout, dtype=dtype),
        Act(act),
    ])


class Downsample(Module):
    """Stride-2 3x3 convolution + instance norm + relu; halves the spatial extent."""

    def __init__(self, cin, cout, *, rng, dtype):
        super().__init__()
        self.body = conv_norm_act(cin, cout, 3, 2, rng=rng, dtype=dtype)

    def forward(self, x):
        F.check_spatial_even(x)
        return self.body(x)


class Upsample(Module):
    """Nearest-neighbour x2 followed by 3x3 convolution + instance norm + relu."""

    def __init__(self, cin, cout, *, rng, dtype):
        super().__init__()
        self.body = conv_norm_act(cin, cout, 3, 1, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.body(F.upsample_nearest2(x))


def resample(x: Tensor, layer: Module) -> Tensor:
    """Apply a :class:`Downsample` or :class:`Upsample` stage."""
    if not isinstance(layer, (Downsample, Upsample)):
        raise TypeError(f"not a resampling layer: {type(layer).__name__}")
    return layer(x)
