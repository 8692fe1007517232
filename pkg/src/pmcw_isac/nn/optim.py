"""Adam with a cosine-decayed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_STEPS = np.iinfo(np.int64).max


def cosine_lr(step: int, total: int, base: float) -> float:
    """``base * (1 + cos(pi * step / total)) / 2``; no warmup, floor 0, clamped past ``total``."""
    if total <= 0 or step >= total:
        return 0.0
    if step <= 0:
        return float(base)
    return float(base) * 0.5 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class OptimizerState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    base_lr: float = 1e-4
    total_steps: int = 1

    @classmethod
    def for_params(cls, params, base_lr: float, total_steps: int) -> "OptimizerState":
        arrays = [_data(p) for p in params]
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays],
                   step=0, base_lr=base_lr, total_steps=total_steps)


def _data(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p


def adam_step(params, grads, state: OptimizerState, lr: float | None = None,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> float:
    """One bias-corrected Adam update, applied in place to the parameter arrays.

    When ``lr`` is None the cosine schedule of ``state`` supplies it.
    Returns the learning rate used.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state are not aligned")
    if state.step >= MAX_STEPS:
        raise OverflowError("Adam step counter overflow")
    if lr is None:
        lr = cosine_lr(state.step, state.total_steps, state.base_lr)
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        w = _data(p)
        if g is None:
            continue
        if g.shape != w.shape or m.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {w.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype, copy=False)
    return lr
