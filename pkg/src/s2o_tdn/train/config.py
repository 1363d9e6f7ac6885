"""Run configuration: defaults, presets, ``key = value`` files and overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..blocks import BlockKind
from ..errors import ConfigError
from ..flt import BranchWiring
from ..losses import LossWeights
from ..model import GeneratorConfig, np_dtype

# fields that change the shape or meaning of the saved tensors
_STRUCTURAL = (
    "base_channels", "num_blocks", "block_kind", "wiring", "flt", "ndf",
    "cycle", "reverse_base_channels", "reverse_blocks", "dtype",
)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    decay_start_epoch: int = 100
    batch_size: int = 1
    seed: int = 0
    block_kind: str = "tfd"
    wiring: str = "a"
    flt: bool = True
    num_blocks: int = 3
    base_channels: int = 32
    ndf: int = 64
    cycle: bool = True
    reverse_base_channels: int = 16
    reverse_blocks: int = 1
    lambda_pix: float = 10.0
    lambda_per: float = 10.0
    lambda_cyc: float = 10.0
    lambda_td: float = 10.0
    patch_size: int = 64
    dtype: str = "float32"
    freeze_discriminator: bool = False
    prefetch: int = 4

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if not 0 <= self.decay_start_epoch <= self.epochs:
            raise ConfigError("need 0 <= decay_start_epoch <= epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        try:
            BlockKind(self.block_kind)
            BranchWiring(self.wiring)
            np_dtype(self.dtype)
            self.weights
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_pix, self.lambda_per, self.lambda_cyc, self.lambda_td)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.base_channels, self.num_blocks, self.block_kind, self.wiring, self.flt, 1, 3, self.dtype)

    def reverse_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.reverse_base_channels, self.reverse_blocks, BlockKind.PLAIN, BranchWiring.DEFAULT_A, False, 3, 1, self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        d = {k: getattr(self, k) for k in _STRUCTURAL}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **{k: coerce(k, v) for k, v in kw.items()})


FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}

# desk scale: 64x64 patches, 200 synthetic pairs, 30 epochs with decay from 15
DESK_PRESET = dict(
    epochs=30, decay_start_epoch=15, patch_size=64, base_channels=12, ndf=16,
    reverse_base_channels=8, dtype="float64",
)
DESK_PAIRS = 200


def coerce(key: str, value):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        out[key] = coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None, preset: dict | None = None) -> TrainConfig:
    values = dict(preset or {})
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for k, v in (overrides or {}).items():
        values[k] = coerce(k, v)
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
