"""Generator (backbone + FLT-guided branch) and PatchGAN discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .autograd import Act, Conv2d, Downsample, InstanceNorm2d, Module, ModuleList, Sequential, Tensor, Upsample, no_grad, tanh
from .autograd.functional import conv_output_size, count_macs
from .autograd.nn import conv_norm_act
from .blocks import BlockKind, ResidualBlock
from .errors import ConfigError, DimensionError
from .flt import BackboneFusion, BranchWiring, FltBranch, flt_head

REFERENCE_PARAMS_M = 2.063  # reported single-generator size, for reference logging only


def np_dtype(name) -> np.dtype:
    dt = np.dtype(name)
    if dt not in (np.float32, np.float64):
        raise ConfigError(f"unsupported dtype {name!r}")
    return dt


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 32
    num_blocks: int = 3
    block_kind: BlockKind = BlockKind.TFD
    wiring: BranchWiring = BranchWiring.DEFAULT_A
    flt: bool = True
    in_channels: int = 1
    out_channels: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "block_kind", BlockKind(self.block_kind))
        object.__setattr__(self, "wiring", BranchWiring(self.wiring))
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        if self.base_channels < 4 or self.base_channels % 2:
            raise ConfigError("base_channels must be even and >= 4")
        np_dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["block_kind"] = self.block_kind.value
        d["wiring"] = self.wiring.value
        return d


@dataclass
class GeneratorOutput:
    optical: Tensor
    flt_image: Optional[Tensor]


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig = GeneratorConfig(), *, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        c, dt = cfg.base_channels, np_dtype(cfg.dtype)
        self.dtype = dt
        feat = 4 * c
        self.encoder = Sequential([
            conv_norm_act(cfg.in_channels, c, 7, rng=rng, dtype=dt),
            Downsample(c, 2 * c, rng=rng, dtype=dt),
            Downsample(2 * c, feat, rng=rng, dtype=dt),
        ])
        self.blocks = ModuleList(ResidualBlock(feat, cfg.block_kind, rng=rng, dtype=dt) for _ in range(cfg.num_blocks))
        if cfg.flt:
            self.branch = FltBranch(cfg.in_channels, c, feat, rng=rng, dtype=dt)
            self.fusion = BackboneFusion(feat, c, feat, rng=rng, dtype=dt)
        self.decoder = Sequential([
            Upsample(feat, 2 * c, rng=rng, dtype=dt),
            Upsample(2 * c, c, rng=rng, dtype=dt),
        ])
        self.out_conv = Conv2d(c, cfg.out_channels, 7, rng=rng, dtype=dt)

    def forward(self, sar: Tensor) -> GeneratorOutput:
        sar = Tensor.ensure(sar)
        if sar.ndim != 4 or sar.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"expected (B, {self.cfg.in_channels}, H, W), got {sar.shape}")
        h, w = sar.shape[2:]
        if h % 4 or w % 4 or h < 16 or w < 16:
            raise DimensionError(f"spatial size {h}x{w} must be divisible by 4 and at least 16")
        head = flt_head(sar) if self.cfg.flt else None
        x = sar + head if head is not None and self.cfg.wiring is BranchWiring.BACKBONE_INPUT_RESIDUAL_B else sar

        f = self.encoder(x)
        outs = []
        for blk in self.blocks:
            f = blk(f)
            outs.append(f)

        flt_image = None
        if self.cfg.flt:
            side = self.branch(sar, outs, self.cfg.wiring, head)
            flt_image = side.flt_image
            f = f + self.fusion(f, flt_image, side.fused_feature)
        optical = tanh(self.out_conv(self.decoder(f)))
        return GeneratorOutput(optical, flt_image)


class Discriminator(Module):
    """70x70 PatchGAN: three stride-2 4x4 stages, one stride-1 stage, then a 1-channel score map."""

    KERNEL, PAD = 4, 1
    STRIDES = (2, 2, 2, 1, 1)

    def __init__(self, in_channels: int = 3, ndf: int = 64, *, rng: np.random.Generator, dtype="float32"):
        super().__init__()
        dt = np_dtype(dtype)
        k, p = self.KERNEL, self.PAD
        self.layers = Sequential([
            Conv2d(in_channels, ndf, k, 2, p, rng=rng, dtype=dt),
            Act("leaky_relu"),
            conv_norm_act(ndf, 2 * ndf, k, 2, padding=p, act="leaky_relu", rng=rng, dtype=dt),
            conv_norm_act(2 * ndf, 4 * ndf, k, 2, padding=p, act="leaky_relu", rng=rng, dtype=dt),
            conv_norm_act(4 * ndf, 8 * ndf, k, 1, padding=p, act="leaky_relu", rng=rng, dtype=dt),
            Conv2d(8 * ndf, 1, k, 1, p, rng=rng, dtype=dt),
        ])

    @classmethod
    def output_size(cls, size: int) -> int:
        for s in cls.STRIDES:
            size = conv_output_size(size, cls.KERNEL, s, cls.PAD)
        return size

    def forward(self, img: Tensor) -> Tensor:
        img = Tensor.ensure(img)
        h, w = img.shape[2:]
        if self.output_size(h) < 1 or self.output_size(w) < 1:
            raise DimensionError(f"input {h}x{w} too small for the patch discriminator")
        return self.layers(img)


def count_params(model: Module) -> int:
    return model.num_parameters()


def count_flops(model: Module, input_shape) -> int:
    """2 x multiply-accumulates of every convolution in one forward pass."""
    dtype = model.parameters()[0].dtype if model.parameters() else np.float32
    with no_grad(), count_macs() as box:
        model(Tensor(np.zeros(input_shape, dtype=dtype)))
    return 2 * box[0]


def param_breakdown(gen: Generator) -> dict:
    groups = {}
    for name, p in gen.named_parameters():
        top = name.split(".", 1)[0]
        groups[top] = groups.get(top, 0) + p.size
    return groups


def summary_rows(model: Module) -> list[dict]:
    rows = []
    for name, mod in model.named_modules():
        own = sum(p.size for p in mod._params.values())
        if own:
            rows.append({"layer": name, "type": type(mod).__name__, "params": own,
                         "shapes": [list(p.shape) for p in mod._params.values()]})
    return rows


def summary_text(model: Module, input_shape=None) -> str:
    rows = summary_rows(model)
    width = max([len(r["layer"]) for r in rows] + [5])
    lines = [f"{'layer':<{width}}  {'type':<14} {'params':>10}"]
    for r in rows:
        lines.append(f"{r['layer']:<{width}}  {r['type']:<14} {r['params']:>10,d}")
    lines.append(f"{'total':<{width}}  {'':<14} {count_params(model):>10,d}")
    if input_shape is not None:
        lines.append(f"FLOPs @ {tuple(input_shape)}: {count_flops(model, input_shape):,d}")
    return "\n".join(lines)
