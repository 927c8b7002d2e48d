"""Central finite-difference checks for the tape's analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .numerics import Tensor


def analytic_grads(loss_fn: Callable[[], Tensor], params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    for p in params.values():
        p.grad = None
    with nx.Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    return {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}


def numeric_grads(
    loss_fn: Callable[[], Tensor], params: dict[str, Tensor], h: float = 1e-6
) -> dict[str, np.ndarray]:
    """Perturb every entry of every parameter in place (restored afterwards)."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``."""
    num = float(np.linalg.norm(a - b))
    den = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return num / den


def check(
    loss_fn: Callable[[], Tensor], params: dict[str, Tensor], h: float = 1e-6
) -> dict[str, float]:
    """Relative error between analytic and finite-difference gradients, per trainable parameter."""
    params = {k: p for k, p in params.items() if p.requires_grad}
    ana = analytic_grads(loss_fn, params)
    num = numeric_grads(loss_fn, params, h)
    return {k: relative_error(ana[k], num[k]) for k in params}
