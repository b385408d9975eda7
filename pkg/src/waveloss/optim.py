"""Adam optimizer over named parameter grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """One Adam update with bias correction.

    params: dict name -> Grid (leaves); grads: dict name -> ndarray.
    Returns a new params dict; state is updated in place.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.data.shape)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.data.shape)
            v = np.zeros(p.data.shape)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        new = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        out[name] = Grid(new, channels=p.channels, cell_size=p.cell_size,
                         name=name)
    return out
