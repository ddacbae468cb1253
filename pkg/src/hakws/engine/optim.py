"""Optimizer and learning-rate schedule.

SGD with momentum 0.9 and coupled weight decay 1e-3: the decay term joins
the raw gradient before the momentum update, so it is smoothed by the same
buffer (not applied directly to the weights).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DivergenceError
from .layers import Parameter

WARMUP_EPOCHS = 5
TOTAL_EPOCHS = 200
PEAK_LR = 0.1


def lr_at_epoch(epoch: float, total_epochs: int = TOTAL_EPOCHS,
                warmup_epochs: int = WARMUP_EPOCHS,
                peak_lr: float = PEAK_LR) -> float:
    """Linear warmup to peak_lr, then cosine decay to zero.

    Accepts fractional epochs so per-step rates interpolate smoothly.
    """
    if not 0.0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    if epoch < warmup_epochs:
        return peak_lr * epoch / warmup_epochs
    span = total_epochs - warmup_epochs
    return 0.5 * peak_lr * (1.0 + math.cos(
        math.pi * (epoch - warmup_epochs) / span))


class SGD:
    def __init__(self, parameters, momentum: float = 0.9,
                 weight_decay: float = 1e-3):
        self.parameters = list(parameters)
        if not all(isinstance(p, Parameter) for p in self.parameters):
            raise TypeError("SGD expects Parameter instances")
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p.data) for p in self.parameters]

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self, lr: float) -> None:
        for p, v in zip(self.parameters, self.velocities):
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError("non-finite gradient")
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= (lr * v).astype(p.data.dtype)

    def state_dict(self) -> dict:
        return {f"velocity.{i}": v for i, v in enumerate(self.velocities)}

    def load_state_dict(self, state: dict) -> None:
        for i, v in enumerate(self.velocities):
            key = f"velocity.{i}"
            if key not in state:
                raise ValueError(f"missing optimizer entry {key}")
            v[...] = np.asarray(state[key]).astype(v.dtype)
