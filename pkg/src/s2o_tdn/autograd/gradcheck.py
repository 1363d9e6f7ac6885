"""Central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    n_checked: int

    @property
    def pass_(self) -> bool:
        return self.passed


def rel_err(a, n):
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def _scalar(out) -> float:
    if not isinstance(out, Tensor) or out.size != 1:
        raise ValueError("gradient check needs a function returning a scalar Tensor")
    return float(out.data.reshape(-1)[0])


def grad_check(fn: Callable[[Tensor], Tensor], point, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare the taped gradient of ``fn`` at ``point`` with central differences."""
    x = Tensor(np.array(point, dtype=np.float64, copy=True), requires_grad=True)
    if x.dtype != np.float64:
        raise TypeError("gradient checks run in 64-bit")
    out = fn(x)
    _scalar(out)
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat, nflat = x.data.reshape(-1), numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = _scalar(fn(x))
            flat[i] = orig - h
            fm = _scalar(fn(x))
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
    err = float(rel_err(analytic, numeric).max()) if numeric.size else 0.0
    return GradCheckReport(err, err < tol, numeric.size)


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    n_coords: int = 8,
    rng: np.random.Generator | None = None,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Check d(loss)/d(param) on a random subset of coordinates of each tensor in ``params``.

    Parameters are perturbed in place and restored.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        if p.dtype != np.float64:
            raise TypeError("gradient checks run in 64-bit")
        p.grad = None
    out = loss_fn()
    _scalar(out)
    out.backward()
    errs = []
    with no_grad():
        for p in params:
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                fp = _scalar(loss_fn())
                flat[i] = orig - h
                fm = _scalar(loss_fn())
                flat[i] = orig
                errs.append(float(rel_err(analytic.reshape(-1)[i], (fp - fm) / (2 * h))))
    err = max(errs) if errs else 0.0
    return GradCheckReport(err, err < tol, len(errs))
