"""Adam with bias correction, operating on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float | None = None) -> np.ndarray:
    """One in-place Adam update; returns ``params`` for convenience."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and state shapes differ")
    lr = state.lr if lr is None else lr
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def exponential_lr(step: int, total_steps: int, lr_start: float, lr_end: float) -> float:
    """Geometric interpolation from lr_start at step 0 to lr_end at total_steps."""
    frac = min(max(step / max(total_steps, 1), 0.0), 1.0)
    return lr_start * (lr_end / lr_start) ** frac
