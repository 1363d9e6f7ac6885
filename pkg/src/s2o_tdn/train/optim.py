"""ADAM with bias correction and the linear-decay learning-rate schedule."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import OptimizerError


def linear_decay(epoch: int, base_lr: float, epochs: int, decay_start: int) -> float:
    """Constant ``base_lr`` before ``decay_start``, then linear to exactly 0 at ``epochs``."""
    if not 0 <= epoch <= epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs}]")
    if epoch < decay_start:
        return base_lr
    if epoch >= epochs:
        return 0.0
    return base_lr * ((epochs - epoch) / (epochs - decay_start))


def lr_schedule(epoch: int, cfg) -> float:
    return linear_decay(epoch, cfg.lr, cfg.epochs, cfg.decay_start_epoch)


def adam_update(param, grad, m, v, step, lr, beta1=0.5, beta2=0.999, eps=1e-8):
    """One in-place bias-corrected ADAM update of ``param``, ``m`` and ``v``."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, named_params: Iterable, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(named_params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise OptimizerError("parameter names must be unique")
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        for name, p in self.params:
            if p.grad is None:
                raise OptimizerError(f"parameter {name!r} has no gradient")
        self.step_count += 1
        for name, p in self.params:
            adam_update(p.data, p.grad.astype(p.dtype, copy=False), self.m[name], self.v[name],
                        self.step_count, lr, self.beta1, self.beta2, self.eps)

    def state_tensors(self, prefix: str) -> dict:
        out = {}
        for name, _ in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict, prefix: str, step_count: int) -> None:
        for name, p in self.params:
            self.m[name] = np.array(tensors[f"{prefix}.m.{name}"], dtype=p.dtype)
            self.v[name] = np.array(tensors[f"{prefix}.v.{name}"], dtype=p.dtype)
        self.step_count = int(step_count)
