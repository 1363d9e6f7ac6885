"""Training objectives.

Total generator objective::

    gan + l_pix * pix + l_per * per + l_cyc * cyc + l_td * (td_tfd + td_flt)

with least-squares adversarial terms and mean-L1 distances everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Mapping, Sequence

import numpy as np

from .autograd import Conv2d, Module, Tensor, relu
from .errors import DimensionError, NumericError
from .flt import phi

TERMS = ("gan", "pix", "per", "cyc", "td_tfd", "td_flt")


@dataclass(frozen=True)
class LossWeights:
    lambda_pix: float = 10.0
    lambda_per: float = 10.0
    lambda_cyc: float = 10.0
    lambda_td: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


@dataclass
class LossReport:
    gan: float = 0.0
    pix: float = 0.0
    per: float = 0.0
    cyc: float = 0.0
    td_tfd: float = 0.0
    td_flt: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    def recombine(self, weights: LossWeights) -> float:
        return combine(self.as_dict(), weights)


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def l1(a: Tensor, b: Tensor) -> Tensor:
    a, b = Tensor.ensure(a), Tensor.ensure(b)
    _same_shape(a, b)
    return (a - b).abs().mean()


def pixel_loss(a: Tensor, b: Tensor) -> Tensor:
    return l1(a, b)


def cycle_loss(x: Tensor, x_reconstructed: Tensor) -> Tensor:
    return l1(x, x_reconstructed)


def gan_loss(scores: Tensor, target_is_real: bool) -> Tensor:
    t = 1.0 if target_is_real else 0.0
    return ((scores - t) ** 2).mean()


def td_loss(optical_true: Tensor, optical_gen: Tensor, flt_image: Tensor) -> tuple[Tensor, Tensor]:
    """``(td_tfd, td_flt)``: L1 between phi(true) and phi(generated) / the side-output image."""
    optical_true, optical_gen = Tensor.ensure(optical_true), Tensor.ensure(optical_gen)
    _same_shape(optical_true, optical_gen)
    target = phi(optical_true)
    if flt_image.shape != target.shape:
        raise DimensionError(f"flt_image must be {target.shape}, got {flt_image.shape}")
    return l1(target, phi(optical_gen)), l1(target, flt_image)


class FeatureExtractor(Module):
    """Frozen, randomly initialized three-stage conv stack used for the perceptual term.

    Its weights are constants (not parameters), drawn once from ``seed``.
    """

    def __init__(self, in_channels: int = 3, widths: Sequence[int] = (8, 16, 32), seed: int = 1234, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.stages = []
        cin = in_channels
        for i, cout in enumerate(widths):
            std = math.sqrt(2.0 / (cin * 9))
            w = Tensor(rng.normal(0.0, std, size=(cout, cin, 3, 3)), dtype=dtype)
            b = Tensor(rng.normal(0.0, 0.01, size=cout), dtype=dtype)
            self.stages.append((w, b, 1 if i == 0 else 2))
            cin = cout

    def forward(self, x: Tensor) -> list[Tensor]:
        from .autograd import conv2d

        feats = []
        for w, b, stride in self.stages:
            if w.dtype != x.dtype:
                w, b = Tensor(w.data.astype(x.dtype)), Tensor(b.data.astype(x.dtype))
            x = relu(conv2d(x, w, b, stride=stride, padding=1))
            feats.append(x)
        return feats


def identity_extractor(x: Tensor) -> list[Tensor]:
    return [x]


def perceptual_loss(a: Tensor, b: Tensor, extractor: Callable[[Tensor], list] = identity_extractor) -> Tensor:
    a, b = Tensor.ensure(a), Tensor.ensure(b)
    _same_shape(a, b)
    total = None
    for fa, fb in zip(extractor(a), extractor(b)):
        term = l1(fa, fb)
        total = term if total is None else total + term
    return total


def _value(x) -> float:
    return float(x.data.reshape(-1)[0]) if isinstance(x, Tensor) else float(x)


def combine(parts: Mapping, weights: LossWeights):
    """Weighted total of the loss parts; missing parts count as zero.

    Works on floats or on Tensors (then the result stays on the tape).
    """
    for name in TERMS:
        if name in parts and not math.isfinite(_value(parts[name])):
            raise NumericError(f"loss term {name!r} is not finite: {_value(parts[name])}")
    get = lambda k: parts.get(k, 0.0)
    return (
        get("gan")
        + weights.lambda_pix * get("pix")
        + weights.lambda_per * get("per")
        + weights.lambda_cyc * get("cyc")
        + weights.lambda_td * (get("td_tfd") + get("td_flt"))
    )


def total_loss(parts: Mapping, weights: LossWeights = LossWeights()):
    return combine(parts, weights)


def report(parts: Mapping, total) -> LossReport:
    vals = {k: _value(v) for k, v in parts.items() if k in TERMS}
    return LossReport(**vals, total=_value(total))
