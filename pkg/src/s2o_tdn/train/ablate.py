"""Variant sweeps: train each cell on shared data, score it per split, average over seeds."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..blocks import BlockKind
from ..data import SCENE_STYLES, ImagePair, SpeckleParams, synth_pairs
from ..flt import BranchWiring
from .config import TrainConfig
from .evaluate import evaluate_translator, generator_translator
from .trainer import Trainer

log = logging.getLogger(__name__)

METRICS = ("psnr", "ssim")
TEST_SPLITS = ("test1", "test2", "test3")


@dataclass(frozen=True)
class Variant:
    name: str
    block_kind: str
    flt: bool
    wiring: str = "a"

    def apply(self, cfg: TrainConfig) -> TrainConfig:
        return cfg.with_overrides(block_kind=self.block_kind, flt=self.flt, wiring=self.wiring)


# component ablation: base model plus each addition on its own and combined
COMPONENT_VARIANTS = (
    Variant("Base", "plain", False),
    Variant("+FLT-guided", "plain", True),
    Variant("+TFD", "tfd", False),
    Variant("+Poly2 +FLT-guided", "poly2", True),
    Variant("+RK2 +FLT-guided", "rk2", True),
    Variant("+TFD +FLT-guided", "tfd", True),
)

# where the FLT head residual is fed back
WIRING_VARIANTS = (
    Variant("S2O-TDN", "tfd", True, "a"),
    Variant("S2O-TDN(b)", "tfd", True, "b"),
    Variant("S2O-TDN(c)", "tfd", True, "c"),
)


def grid_variants(block_kinds=None, flts=(False, True), wirings=None) -> list[Variant]:
    """Cartesian grid; wiring is only varied for cells that have the branch."""
    block_kinds = [BlockKind(k).value for k in (block_kinds or list(BlockKind))]
    wirings = [BranchWiring(w).value for w in (wirings or list(BranchWiring))]
    cells = []
    for kind, flt in itertools.product(block_kinds, flts):
        for wiring in (wirings if flt else wirings[:1]):
            suffix = f"+flt({wiring})" if flt else ""
            cells.append(Variant(f"{kind}{suffix}", kind, flt, wiring))
    return cells


def synth_splits(n_test: int, size: int, seed: int = 1) -> dict:
    """Three synthetic test splits, one per scene style, with their own speckle draws."""
    return {
        name: synth_pairs(n_test, size, SpeckleParams(seed=seed + 10 * i), style=style, prefix=f"{name}_")
        for i, (name, style) in enumerate(zip(TEST_SPLITS, SCENE_STYLES))
    }


def run_cell(cfg: TrainConfig, pairs: Sequence[ImagePair], splits: dict) -> dict:
    trainer = Trainer(cfg, pairs)
    trainer.run(checkpoint=False)
    translate = generator_translator(trainer.gen, trainer.dtype)
    return {name: evaluate_translator(translate, test).mean() for name, test in splits.items()}


def ablate(base: TrainConfig, variants: Sequence[Variant], seeds: Sequence[int], pairs: Sequence[ImagePair], splits: dict) -> list[dict]:
    """One row per variant with seed-averaged ``{metric}_{split}`` columns.

    Every cell sees the same training pairs and test splits; only the seed differs
    between repeats.
    """
    rows = []
    for variant in variants:
        per_seed = []
        for seed in seeds:
            cfg = variant.apply(base).with_overrides(seed=seed)
            scores = run_cell(cfg, pairs, splits)
            log.info("%s seed %d: %s", variant.name, seed, {k: round(v["psnr"], 3) for k, v in scores.items()})
            per_seed.append(scores)
        row = {"method": variant.name, "seeds": list(seeds), "per_seed": per_seed}
        for metric, split in itertools.product(METRICS, splits):
            row[f"{metric}_{split}"] = float(np.mean([s[split][metric] for s in per_seed]))
        rows.append(row)
    return rows


def format_report(rows: Sequence[dict], splits=TEST_SPLITS, title: str = "") -> str:
    """Method rows against PSNR and SSIM column groups, one column per split."""
    name_w = max([len("Method")] + [len(r["method"]) for r in rows])
    col_w = 8
    group_w = len(splits) * (col_w + 1) - 1
    lines = [title] if title else []
    lines.append(" " * name_w + " | " + "PSNR".center(group_w) + " | " + "SSIM".center(group_w))
    lines.append("Method".ljust(name_w) + " | " + " ".join(s.capitalize().rjust(col_w) for s in splits)
                 + " | " + " ".join(s.capitalize().rjust(col_w) for s in splits))
    lines.append("-" * len(lines[-1]))
    for r in rows:
        psnr = " ".join(f"{r[f'psnr_{s}']:{col_w}.2f}" for s in splits)
        ssim = " ".join(f"{r[f'ssim_{s}']:{col_w}.4f}" for s in splits)
        lines.append(r["method"].ljust(name_w) + " | " + psnr + " | " + ssim)
    return "\n".join(lines)


def mean_psnr(row: dict, splits=TEST_SPLITS) -> float:
    return float(np.mean([row[f"psnr_{s}"] for s in splits]))
