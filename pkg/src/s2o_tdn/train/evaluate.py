"""Scoring checkpoints on paired data and writing translated images."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from ..autograd import Tensor, no_grad
from ..data import ImagePair, to_uint8
from ..metrics import MetricReport, to_unit
from .config import TrainConfig
from .trainer import load_generator

Translator = Callable[[np.ndarray], np.ndarray]


def identity_translator(sar: np.ndarray) -> np.ndarray:
    """The no-learning baseline: SAR intensity replicated to three channels."""
    return np.repeat(sar, 3, axis=0)


def generator_translator(gen, dtype=np.float64) -> Translator:
    def run(sar: np.ndarray) -> np.ndarray:
        with no_grad():
            out = gen(Tensor(sar[None].astype(dtype)))
        return out.optical.data[0].astype(np.float64)

    return run


def evaluate_translator(translate: Translator, pairs: Sequence[ImagePair], workers: int = 1) -> MetricReport:
    """Score ``translate`` on every pair; predictions are computed in input order."""
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            preds = list(pool.map(lambda p: translate(p.sar), pairs))
    else:
        preds = [translate(p.sar) for p in pairs]
    report = MetricReport()
    for pair, pred in zip(pairs, preds):
        report.add(pair.id, to_unit(pred), to_unit(pair.optical))
    return report


def evaluate(checkpoint, splits: dict, cfg: TrainConfig | None = None, workers: int = 1) -> dict:
    """Per-split :class:`MetricReport` for the generator stored in ``checkpoint``.

    When ``cfg`` is given its fingerprint must match the checkpoint's.
    """
    gen, cfg = load_generator(checkpoint, cfg)
    translate = generator_translator(gen, gen.dtype)
    return {name: evaluate_translator(translate, pairs, workers) for name, pairs in splits.items()}


def split_rows(reports: dict) -> list[dict]:
    return [{"split": name, "n": r.n, **r.mean()} for name, r in reports.items()]


def translate_images(checkpoint, sar_images: dict, out_dir, cfg: TrainConfig | None = None) -> list[Path]:
    """Write ``{id}_optical.png`` and ``{id}_flt.png`` for each ``id -> (1, H, W)`` SAR array."""
    gen, _ = load_generator(checkpoint, cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for pair_id, sar in sar_images.items():
        with no_grad():
            out = gen(Tensor(np.asarray(sar)[None].astype(gen.dtype)))
        opt_path = out_dir / f"{pair_id}_optical.png"
        Image.fromarray(to_uint8(out.optical.data[0].transpose(1, 2, 0))).save(opt_path)
        written.append(opt_path)
        if out.flt_image is not None:
            flt_path = out_dir / f"{pair_id}_flt.png"
            Image.fromarray(to_uint8(np.clip(out.flt_image.data[0, 0], -1, 1))).save(flt_path)
            written.append(flt_path)
    return written
