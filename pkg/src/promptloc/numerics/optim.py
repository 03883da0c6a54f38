"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adamw_step(params, grads, state: OptimizerState):
    """Return updated parameter arrays and advance ``state`` by one step.

    Decay is applied to the parameter before the moment update, as in the
    decoupled formulation (p <- p - lr*wd*p, then the Adam step).
    """
    if len(params) != len(grads):
        raise ValueError("adamw_step: params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("adamw_step: optimizer state tracks a different parameter list")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"adamw_step: shape mismatch {p.shape} / {g.shape} / {m.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * (g * g)
        state.m[i], state.v[i] = m, v
        p = p - state.lr * state.weight_decay * p
        p = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out.append(p.astype(params[i].dtype, copy=False))
    return out, state


class AdamW:
    """Thin stateful wrapper that reads ``.grad`` and writes ``.data``."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        self.params = list(params)
        self.state = OptimizerState(
            lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adamw_step([p.data for p in self.params], grads, self.state)
        for p, d in zip(self.params, new):
            p.data = d
