"""Optimizer, schedule, training loop, evaluation and ablation."""

from .config import DESK_PAIRS, DESK_PRESET, TrainConfig, load_config
from .optim import Adam, adam_update, linear_decay, lr_schedule
from .trainer import Trainer, load_generator, read_checkpoint, train

__all__ = [
    "DESK_PAIRS", "DESK_PRESET", "TrainConfig", "load_config",
    "Adam", "adam_update", "linear_decay", "lr_schedule",
    "Trainer", "load_generator", "read_checkpoint", "train",
]
