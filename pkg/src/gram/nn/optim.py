"""AdamW with decoupled weight decay, global-norm clipping, cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BASE_LR = 2e-4
WARMUP_STEPS = 10000
CLIP_NORM = 1.0


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_global_norm(grads: dict, max_norm: float = CLIP_NORM) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float,
               clip_norm: float | None = CLIP_NORM) -> None:
    """One AdamW update, in place on the ``params`` arrays.

    Weight decay is decoupled (p <- p - lr*wd*p, independent of the moment
    update) and gradient clipping at global norm 1.0 happens before the
    moments are touched.  Non-finite gradients reject the whole step.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}; step rejected")
    if clip_norm is not None:
        clip_global_norm(grads, clip_norm)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def cosine_warmup_lr(step: int, total_steps: int, warmup: int = WARMUP_STEPS,
                     base_lr: float = BASE_LR) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if step < 0 or step > total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup > 0 and step < warmup:
        return base_lr * step / warmup
    if total_steps == warmup:
        return base_lr
    progress = (step - warmup) / (total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
