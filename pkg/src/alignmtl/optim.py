"""Plain-vector optimizers for the desk-scale training loops.

The aggregated multi-task direction is fed in wherever a gradient would
normally go. Adam uses the customary defaults (beta1=0.9, beta2=0.999,
eps=1e-8) with bias correction; only the learning rate is exposed through
the run configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """State of an SGD or Adam optimizer over one parameter vector."""

    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def make_optimizer(kind: str, lr: float) -> OptimizerState:
    return OptimizerState(kind=kind, lr=lr)


def sgd_step(state: OptimizerState, params, direction) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != params.shape:
        raise ValueError(f"direction shape {direction.shape} does not match params {params.shape}")
    state.step_count += 1
    return params - state.lr * direction


def adam_step(state: OptimizerState, params, direction) -> np.ndarray:
    """One bias-corrected Adam update treating ``direction`` as the gradient."""
    params = np.asarray(params, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != params.shape:
        raise ValueError(f"direction shape {direction.shape} does not match params {params.shape}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * direction
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * direction * direction
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def apply_step(state: OptimizerState, params, direction) -> np.ndarray:
    if state.kind == "sgd":
        return sgd_step(state, params, direction)
    return adam_step(state, params, direction)
