from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

BASE_LR = 0.1
MOMENTUM = 0.9
L2 = 1e-4


class Profile(str, Enum):
    URBAN = "urban"
    ESC = "esc"


# epochs between /10 learning-rate drops, and total training epochs
STEP_EPOCHS = {Profile.URBAN: 80, Profile.ESC: 100}
TOTAL_EPOCHS = {Profile.URBAN: 200, Profile.ESC: 300}
N_FOLDS = {Profile.URBAN: 10, Profile.ESC: 5}


def lr_schedule(epoch: int, profile: Profile | str, base: float = BASE_LR) -> float:
    """Step decay: base, base/10, base/100 (held from the second drop onwards)."""
    drops = min(epoch // STEP_EPOCHS[Profile(profile)], 2)
    return base * 10.0 ** -drops


@dataclass
class OptimizerState:
    lr: float = BASE_LR
    momentum: float = MOMENTUM
    l2: float = L2
    velocity: dict = field(default_factory=dict)


def sgd_nesterov_step(params, grads, state: OptimizerState, decay=None, keys=None) -> None:
    """In-place Nesterov update on parallel lists of parameters and gradients.

    ``decay[i]`` selects whether the L2 term ``l2 * p`` joins the gradient.
    """
    mu, lr = state.momentum, state.lr
    n = len(params)
    decay = decay if decay is not None else [True] * n
    keys = keys if keys is not None else list(range(n))
    for key, p, g, d in zip(keys, params, grads, decay):
        if g is None:
            continue
        if d and state.l2:
            g = g + state.l2 * p
        v = state.velocity.get(key)
        if v is None:
            v = state.velocity[key] = np.zeros_like(p)
        v *= mu
        v -= lr * g
        p += mu * v - lr * g


class SGDNesterov:
    def __init__(self, lr: float = BASE_LR, momentum: float = MOMENTUM, l2: float = L2):
        self.state = OptimizerState(lr, momentum, l2)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def step(self, net) -> None:
        keys, params, grads, decay = [], [], [], []
        for key, p, g, d in net.parameters():
            keys.append(key)
            params.append(p)
            grads.append(g)
            decay.append(d)
        sgd_nesterov_step(params, grads, self.state, decay, keys)
