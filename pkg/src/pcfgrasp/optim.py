"""AdamW with decoupled weight decay, plus an optional step-wise lr schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, TrainingError
from .tensor import Tensor

DEFAULT_LR = 1e-4
DEFAULT_WEIGHT_DECAY = 5e-4


@dataclass
class OptimizerState:
    learning_rate: float = DEFAULT_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def step_decay(base_lr: float, step: int, every: int, factor: float) -> float:
    """Piecewise-constant schedule: multiply by ``factor`` every ``every`` steps."""
    if every <= 0:
        return base_lr
    return base_lr * factor ** (step // every)


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray] | None,
    state: OptimizerState,
    lr: float | None = None,
) -> OptimizerState:
    """Apply one AdamW update in place and return the (mutated) state.

    ``grads`` defaults to each parameter's ``.grad``; a missing gradient is
    treated as zero. ``lr`` overrides ``state.learning_rate`` for this step.
    """
    lr = state.learning_rate if lr is None else lr
    grads = grads if grads is not None else {k: p.grad for k, p in params.items()}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, parameter is {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = p.data - lr * state.weight_decay * p.data - lr * update
    return state
