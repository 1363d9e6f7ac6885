"""Alternating generator / discriminator training with paired supervision."""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import numpy as np

from ..autograd import Module, Tensor, no_grad
from ..data import ImagePair, crop_patches, prefetch
from ..errors import CheckpointError, DivergenceError
from ..autograd.serialize import load_tensors, save_tensors
from ..losses import (
    TERMS,
    FeatureExtractor,
    LossReport,
    combine,
    cycle_loss,
    gan_loss,
    perceptual_loss,
    pixel_loss,
    td_loss,
)
from ..model import Discriminator, Generator, np_dtype
from .config import TrainConfig
from .optim import Adam, lr_schedule

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "epoch", "lr") + TERMS + ("total", "d_loss")
CKPT_FORMAT = 1


@contextmanager
def frozen(module: Module):
    """Stop gradients from being recorded for ``module``'s parameters."""
    params = module.parameters()
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


def stack_batch(pairs: Sequence[ImagePair], dtype) -> tuple[Tensor, Tensor]:
    sar = np.stack([p.sar for p in pairs]).astype(dtype)
    opt = np.stack([p.optical for p in pairs]).astype(dtype)
    return Tensor(sar), Tensor(opt)


class Trainer:
    def __init__(self, cfg: TrainConfig, pairs: Sequence[ImagePair], out_dir=None):
        if not pairs:
            raise ValueError("training set is empty")
        self.cfg = cfg
        self.pairs = list(pairs)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.dtype = np_dtype(cfg.dtype)
        self.gen = Generator(cfg.generator_config(), rng=np.random.default_rng([cfg.seed, 1]))
        self.rev = Generator(cfg.reverse_config(), rng=np.random.default_rng([cfg.seed, 2])) if cfg.cycle else None
        self.disc = Discriminator(3, cfg.ndf, rng=np.random.default_rng([cfg.seed, 3]), dtype=cfg.dtype)
        self.extractor = FeatureExtractor(dtype=self.dtype)

        g_params = [("gen." + n, p) for n, p in self.gen.named_parameters()]
        if self.rev is not None:
            g_params += [("rev." + n, p) for n, p in self.rev.named_parameters()]
        self.opt_g = Adam(g_params, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.opt_d = Adam([("disc." + n, p) for n, p in self.disc.named_parameters()], cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.step = 0
        self.history: list[dict] = []
        self.last_checkpoint: Path | None = None
        self._log_fh = None

    # -- schedule ----------------------------------------------------------------
    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.pairs) / self.cfg.batch_size)

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.cfg.epochs

    @property
    def epoch(self) -> int:
        return self.step // self.steps_per_epoch

    def epoch_order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.cfg.seed, 100, epoch]).permutation(len(self.pairs))

    def batch_for(self, step: int) -> list[ImagePair]:
        epoch, idx = divmod(step, self.steps_per_epoch)
        bs = self.cfg.batch_size
        picks = self.epoch_order(epoch)[idx * bs : (idx + 1) * bs]
        batch = []
        for j, k in enumerate(picks):
            p = self.pairs[int(k)]
            if p.sar.shape[1] != self.cfg.patch_size or p.sar.shape[2] != self.cfg.patch_size:
                p = crop_patches(p, self.cfg.patch_size, "random", seed=[self.cfg.seed, 200, step, j])
            batch.append(p)
        return batch

    # -- one iteration -------------------------------------------------------------
    def generator_losses(self, sar: Tensor, optical: Tensor):
        out = self.gen(sar)
        fake = out.optical
        with frozen(self.disc):
            parts = {"gan": gan_loss(self.disc(fake), True)}
        parts["pix"] = pixel_loss(fake, optical)
        parts["per"] = perceptual_loss(fake, optical, self.extractor)
        if self.rev is not None:
            parts["cyc"] = cycle_loss(sar, self.rev(fake).optical)
        if out.flt_image is not None:
            parts["td_tfd"], parts["td_flt"] = td_loss(optical, fake, out.flt_image)
        return out, parts

    def train_step(self, batch: Sequence[ImagePair], lr: float) -> dict:
        sar, optical = stack_batch(batch, self.dtype)
        self.opt_g.zero_grad()
        out, parts = self.generator_losses(sar, optical)
        values = {k: float(v.data) for k, v in parts.items()}
        bad = [k for k, v in values.items() if not math.isfinite(v)]
        if bad:
            raise DivergenceError(f"non-finite loss term(s) {bad} at step {self.step}", values, self.last_checkpoint)
        total = combine(parts, self.cfg.weights)
        total.backward()
        self.opt_g.step(lr)

        fake = out.optical.detach()
        self.opt_d.zero_grad()
        if self.cfg.freeze_discriminator:
            with no_grad():
                d_loss = 0.5 * (gan_loss(self.disc(optical), True) + gan_loss(self.disc(fake), False))
        else:
            d_loss = 0.5 * (gan_loss(self.disc(optical), True) + gan_loss(self.disc(fake), False))
            d_loss.backward()
            self.opt_d.step(lr)
        d_val = float(d_loss.data)
        if not math.isfinite(d_val):
            raise DivergenceError(f"non-finite discriminator loss at step {self.step}", {"d_loss": d_val}, self.last_checkpoint)

        rep = LossReport(**{k: values.get(k, 0.0) for k in TERMS}, total=float(total.data))
        row = {"step": self.step, "epoch": self.epoch, "lr": lr, **rep.as_dict(), "d_loss": d_val}
        self.step += 1
        return row

    # -- loop ------------------------------------------------------------------------
    def _open_log(self):
        if self.out_dir is None or self._log_fh is not None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "train_log.tsv"
        fresh = not path.exists() or self.step == 0
        self._log_fh = open(path, "w" if fresh else "a")
        if fresh:
            self._log_fh.write("\t".join(LOG_COLUMNS) + "\n")

    def _write_log(self, row: dict) -> None:
        if self._log_fh is not None:
            self._log_fh.write("\t".join(repr(row[c]) for c in LOG_COLUMNS) + "\n")
            self._log_fh.flush()

    def run(self, max_steps: int | None = None, checkpoint: bool = True) -> list[dict]:
        """Train until the configured epoch budget (or ``max_steps`` more steps) is used up."""
        self._open_log()
        end = self.total_steps if max_steps is None else min(self.total_steps, self.step + max_steps)
        steps = range(self.step, end)
        rows = []
        try:
            for batch in prefetch((self.batch_for(s) for s in steps), self.cfg.prefetch):
                epoch = self.epoch
                row = self.train_step(batch, lr_schedule(epoch, self.cfg))
                rows.append(row)
                self.history.append(row)
                self._write_log(row)
                if self.step % self.steps_per_epoch == 0:
                    log.info("epoch %d done: total=%.4f pix=%.4f", epoch, row["total"], row["pix"])
                    if checkpoint and self.out_dir is not None:
                        self.save_checkpoint(self.out_dir / f"ckpt_epoch_{epoch + 1:03d}")
        finally:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None
        return rows

    # -- checkpoints -----------------------------------------------------------------
    def state_tensors(self) -> dict:
        tensors = {}
        tensors.update({"gen." + n: p.data for n, p in self.gen.named_parameters()})
        if self.rev is not None:
            tensors.update({"rev." + n: p.data for n, p in self.rev.named_parameters()})
        tensors.update({"disc." + n: p.data for n, p in self.disc.named_parameters()})
        tensors.update(self.opt_g.state_tensors("adam_g"))
        tensors.update(self.opt_d.state_tensors("adam_d"))
        return tensors

    def save_checkpoint(self, path) -> Path:
        meta = {
            "format": CKPT_FORMAT,
            "step": self.step,
            "epoch": self.step / self.steps_per_epoch,
            "adam_g_step": self.opt_g.step_count,
            "adam_d_step": self.opt_d.step_count,
            "fingerprint": self.cfg.fingerprint(),
            "config": self.cfg.to_dict(),
            "seed": self.cfg.seed,
            "rng": {"kind": "numpy-seedsequence", "entropy": self.cfg.seed, "position": self.step},
        }
        path = save_tensors(path, self.state_tensors(), meta)
        self.last_checkpoint = path
        return path

    def load_checkpoint(self, path) -> None:
        tensors, meta = read_checkpoint(path, self.cfg)
        for prefix, mod in (("gen.", self.gen), ("rev.", self.rev), ("disc.", self.disc)):
            if mod is None:
                continue
            mod.load_state_dict({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})
        self.opt_g.load_state_tensors(tensors, "adam_g", meta["adam_g_step"])
        self.opt_d.load_state_tensors(tensors, "adam_d", meta["adam_d_step"])
        self.step = int(meta["step"])
        self.last_checkpoint = Path(path)

    @classmethod
    def resume(cls, path, pairs, out_dir=None, cfg: TrainConfig | None = None) -> "Trainer":
        _, meta = load_tensors(path)
        cfg = cfg or TrainConfig(**meta["config"])
        trainer = cls(cfg, pairs, out_dir)
        trainer.load_checkpoint(path)
        return trainer


def read_checkpoint(path, cfg: TrainConfig | None = None) -> tuple[dict, dict]:
    try:
        tensors, meta = load_tensors(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != CKPT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    if cfg is not None and meta.get("fingerprint") != cfg.fingerprint():
        raise CheckpointError(f"{path}: config fingerprint {meta.get('fingerprint')} does not match {cfg.fingerprint()}")
    return tensors, meta


def load_generator(path, cfg: TrainConfig | None = None) -> tuple[Generator, TrainConfig]:
    tensors, meta = read_checkpoint(path, cfg)
    cfg = cfg or TrainConfig(**meta["config"])
    gen = Generator(cfg.generator_config(), rng=np.random.default_rng(0))
    gen.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("gen.")})
    return gen, cfg


def train(cfg: TrainConfig, pairs: Sequence[ImagePair], out_dir) -> tuple[Path, list[dict]]:
    trainer = Trainer(cfg, pairs, out_dir)
    rows = trainer.run()
    if trainer.last_checkpoint is None:
        trainer.save_checkpoint(Path(out_dir) / "ckpt_final")
    return trainer.last_checkpoint, rows
