"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of ``params`` (name -> ndarray) from ``grads``.

    Entries whose gradient is ``None`` are skipped.  Increments ``state.t``.
    """
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale all gradients down together so their joint L2 norm is <= ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None)))
    if max_norm is not None and total > max_norm > 0:
        scale = max_norm / total
        for k, g in grads.items():
            if g is not None:
                grads[k] = g * scale
    return total


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.state = AdamState()

    def step(self, tensors):
        """Update a name -> Tensor mapping from the tensors' ``.grad`` buffers."""
        grads = {k: t.grad for k, t in tensors.items()}
        norm = clip_global_norm(grads, self.clip_norm)
        arrays = {k: t.data for k, t in tensors.items()}
        adam_step(arrays, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        return norm
