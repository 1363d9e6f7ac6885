"""Paired SAR/optical data: manifests, decoding, cropping and a synthetic generator.

All arrays handed out are float64 in [-1, 1], channels first: SAR ``(1, H, W)``,
optical ``(3, H, W)``.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import IngestionError

SPLITS = ("train", "test1", "test2", "test3")


@dataclass(frozen=True)
class ImagePair:
    sar: np.ndarray
    optical: np.ndarray
    id: str

    def __post_init__(self):
        if self.sar.ndim != 3 or self.sar.shape[0] != 1:
            raise IngestionError(f"{self.id}: SAR must be (1, H, W), got {self.sar.shape}")
        if self.optical.ndim != 3 or self.optical.shape[0] != 3:
            raise IngestionError(f"{self.id}: optical must be (3, H, W), got {self.optical.shape}")
        if self.sar.shape[1:] != self.optical.shape[1:]:
            raise IngestionError(f"{self.id}: SAR {self.sar.shape[1:]} and optical {self.optical.shape[1:]} differ in size")


@dataclass(frozen=True)
class SpeckleParams:
    looks: float = 1.0
    geometry_warp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.looks > 0:
            raise ValueError("looks must be > 0")


@dataclass
class DatasetManifest:
    root: Path
    entries: list = field(default_factory=list)  # (id, sar_path, optical_path)
    split: str = "train"

    @classmethod
    def read(cls, path, split: str | None = None) -> "DatasetManifest":
        """Parse ``id<TAB>sar<TAB>optical`` lines; ``# split: name`` sets the split tag."""
        path = Path(path)
        entries, tag = [], None
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "split":
                    tag = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}:{lineno}: expected 3 tab-separated fields")
            entries.append(tuple(parts))
        return cls(path.parent, entries, split or tag or "train")

    def write(self, path) -> Path:
        path = Path(path)
        lines = [f"# split: {self.split}"] + ["\t".join(e) for e in self.entries]
        path.write_text("\n".join(lines) + "\n")
        return path


def to_unit_range(u8: np.ndarray) -> np.ndarray:
    """8-bit values to [-1, 1] via 2x/255 - 1."""
    return u8.astype(np.float64) * (2.0 / 255.0) - 1.0


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _decode(path: Path, mode: str, pair_id: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert(mode))
    except (OSError, ValueError) as exc:
        raise IngestionError(f"{pair_id}: cannot decode {path}: {exc}") from exc
    return arr


def load_pair(root: Path, pair_id: str, sar_path: str, optical_path: str) -> ImagePair:
    sar = _decode(root / sar_path, "L", pair_id)
    opt = _decode(root / optical_path, "RGB", pair_id)
    return ImagePair(to_unit_range(sar)[None], to_unit_range(opt).transpose(2, 0, 1), pair_id)


def load_pairs(manifest: DatasetManifest) -> Iterator[ImagePair]:
    for pair_id, sar_path, opt_path in manifest.entries:
        yield load_pair(manifest.root, pair_id, sar_path, opt_path)


def save_pair(pair: ImagePair, directory, prefix: str = "") -> tuple[str, str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sar_name, opt_name = f"{prefix}{pair.id}_sar.png", f"{prefix}{pair.id}_opt.png"
    Image.fromarray(to_uint8(pair.sar[0])).save(directory / sar_name)
    Image.fromarray(to_uint8(pair.optical.transpose(1, 2, 0))).save(directory / opt_name)
    return sar_name, opt_name


def write_dataset(pairs: Sequence[ImagePair], directory, split: str = "train", name: str | None = None) -> Path:
    """Write PNGs plus a manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    entries = []
    for p in pairs:
        s, o = save_pair(p, directory)
        entries.append((p.id, s, o))
    return DatasetManifest(directory, entries, split).write(directory / (name or f"{split}.tsv"))


def crop_patches(pair: ImagePair, size: int, mode: str = "center", seed: int | None = None) -> ImagePair:
    _, h, w = pair.sar.shape
    if size > min(h, w) or size < 1:
        raise ValueError(f"crop size {size} does not fit {h}x{w}")
    if mode == "center":
        top, left = (h - size) // 2, (w - size) // 2
    elif mode == "random":
        rng = np.random.default_rng(seed)
        top, left = int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))
    else:
        raise ValueError(f"unknown crop mode {mode!r}")
    win = (slice(None), slice(top, top + size), slice(left, left + size))
    return ImagePair(pair.sar[win].copy(), pair.optical[win].copy(), pair.id)


# -- synthetic scenes ----------------------------------------------------------

# land-cover palette (RGB in [0, 1]); luminances are deliberately spread out
PALETTE = np.array([
    [0.10, 0.22, 0.45],  # water
    [0.16, 0.42, 0.14],  # forest
    [0.45, 0.62, 0.25],  # grassland
    [0.60, 0.46, 0.30],  # bare soil
    [0.78, 0.76, 0.72],  # built-up
    [0.90, 0.86, 0.62],  # sand
])

SCENE_STYLES = ("mixed", "smooth", "blocky")
SAR_FLOOR = 1e-3
SAR_LOG_RANGE = (np.log(SAR_FLOOR), np.log(4.0))


def synth_scene(size: int, rng: np.random.Generator, style: str = "mixed") -> np.ndarray:
    """A piecewise-smooth RGB scene in [0, 1], shape (3, size, size)."""
    if style not in SCENE_STYLES:
        raise ValueError(f"unknown scene style {style!r}")
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = PALETTE[rng.integers(len(PALETTE))]
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx + np.sin(angle) * yy) * rng.uniform(0.05, 0.25)
    img = base[:, None, None] * (0.85 + ramp[None])

    n_shapes = {"mixed": rng.integers(3, 8), "smooth": rng.integers(2, 4), "blocky": rng.integers(6, 12)}[style]
    for _ in range(int(n_shapes)):
        mask_im = Image.new("L", (size, size), 0)
        draw = ImageDraw.Draw(mask_im)
        if style == "blocky" or (style == "mixed" and rng.random() < 0.4):
            x0, y0 = rng.integers(0, size - 4, size=2)
            wd, ht = rng.integers(4, max(5, size // 2), size=2)
            draw.rectangle([int(x0), int(y0), int(x0 + wd), int(y0 + ht)], fill=255)
        else:
            cx, cy = rng.uniform(0, size, size=2)
            k = int(rng.integers(3, 8))
            radius = rng.uniform(size * 0.1, size * 0.45)
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
            radii = radius * rng.uniform(0.5, 1.0, size=k)
            pts = [(float(cx + r * np.cos(a)), float(cy + r * np.sin(a))) for a, r in zip(angles, radii)]
            draw.polygon(pts, fill=255)
        mask = np.asarray(mask_im, dtype=np.float64) / 255.0
        if style == "smooth":
            mask = ndimage.gaussian_filter(mask, sigma=size / 32)
        color = PALETTE[rng.integers(len(PALETTE))]
        shade = 0.9 + 0.2 * (np.cos(angle + 1.0) * xx + np.sin(angle + 1.0) * yy)
        layer = color[:, None, None] * shade[None]
        img = img * (1 - mask[None]) + layer * mask[None]
    return np.clip(img, 0.0, 1.0)


def speckle_field(shape, looks: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative gamma speckle with shape ``looks`` and unit mean."""
    return rng.gamma(shape=looks, scale=1.0 / looks, size=shape)


def sar_from_optical(optical01: np.ndarray, params: SpeckleParams, rng: np.random.Generator) -> np.ndarray:
    """Speckled, log-compressed SAR-like image in [-1, 1], shape (1, H, W)."""
    intensity = optical01.mean(axis=0)
    if params.geometry_warp > 0:
        h, w = intensity.shape
        shift = rng.uniform(-params.geometry_warp, params.geometry_warp, size=2)
        theta = rng.uniform(-1, 1) * params.geometry_warp * np.pi / 180.0
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        center = np.array([h - 1, w - 1]) / 2.0
        offset = center - rot @ center + shift
        intensity = ndimage.affine_transform(intensity, rot, offset=offset, order=1, mode="nearest")
    speckled = intensity * speckle_field(intensity.shape, params.looks, rng)
    lo, hi = SAR_LOG_RANGE
    logged = np.log(np.maximum(speckled, SAR_FLOOR))
    return np.clip(2.0 * (logged - lo) / (hi - lo) - 1.0, -1.0, 1.0)[None]


def synth_pairs(n: int, size: int = 64, params: SpeckleParams = SpeckleParams(), style: str = "mixed", prefix: str = "syn") -> list[ImagePair]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(params.seed)
    pairs = []
    for i in range(n):
        scene = synth_scene(size, rng, style)
        sar = sar_from_optical(scene, params, rng)
        pairs.append(ImagePair(sar, scene * 2.0 - 1.0, f"{prefix}{i:05d}"))
    return pairs


def prefetch(items: Iterable, depth: int = 4) -> Iterator:
    """Produce ``items`` on a worker thread through a bounded queue, preserving order."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = object()
    errors = []

    def worker():
        try:
            for item in items:
                q.put(item)
        except BaseException as exc:  # surfaced on the consumer side
            errors.append(exc)
        finally:
            q.put(done)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is done:
            break
        yield item
    t.join()
    if errors:
        raise errors[0]
