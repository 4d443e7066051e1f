"""Decoupled-weight-decay Adam and the cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .model import TRAINABLE, ModelGrads, ModelParams


@dataclass
class OptimState:
    """First/second moment accumulators plus the step counter and hyperparameters."""

    base_lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_optim_state(
    params: ModelParams,
    base_lr: float = 3e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> OptimState:
    """Zeroed moments shaped like every trainable tensor."""
    if base_lr < 0 or eps <= 0 or weight_decay < 0:
        raise ConfigError("base_lr/weight_decay must be >= 0 and eps > 0")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ConfigError("betas must lie in [0, 1)")
    return OptimState(
        base_lr=base_lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
        m={name: np.zeros_like(getattr(params, name)) for name in TRAINABLE},
        v={name: np.zeros_like(getattr(params, name)) for name in TRAINABLE},
    )


def step(state: OptimState, params: ModelParams, grads: ModelGrads, lr: float | None = None) -> None:
    """One bias-corrected moment update with weight decay applied directly to params.

    Rejects the whole step (state and params untouched) if any gradient entry
    is non-finite.
    """
    if lr is None:
        lr = state.base_lr
    if lr < 0:
        raise ConfigError("learning rate must be >= 0")
    for name in TRAINABLE:
        if not np.isfinite(getattr(grads, name)).all():
            raise NumericError(f"non-finite gradient for {name}; step rejected")
    state.step_count += 1
    c1 = 1.0 - state.beta1**state.step_count
    c2 = 1.0 - state.beta2**state.step_count
    for name in TRAINABLE:
        g = getattr(grads, name)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p = getattr(params, name)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay != 0.0:
            p -= lr * state.weight_decay * p


def cosine_lr(epoch: float, total_epochs: int, base_lr: float, min_lr: float) -> float:
    """Half-cosine interpolation from base_lr (epoch 0) down to min_lr (final epoch)."""
    if total_epochs <= 0:
        raise ConfigError("total_epochs must be >= 1")
    if not 0 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs}]")
    if base_lr < 0 or min_lr < 0 or min_lr > base_lr:
        raise ConfigError("need 0 <= min_lr <= base_lr")
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + np.cos(np.pi * epoch / total_epochs))
