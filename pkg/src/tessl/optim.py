"""SGD with momentum, LARS, Adam and a gradient accumulator.

Parameters are a ``dict[str, np.ndarray]`` updated in place; each optimizer
keeps its own per-name buffers.
"""
from __future__ import annotations

from typing import Callable, Mapping, MutableMapping

import numpy as np

Params = MutableMapping[str, np.ndarray]
Grads = Mapping[str, np.ndarray]


def pretrain_lr(effective_batch: int, base: float = 0.3) -> float:
    """Linear scaling rule: base * batch / 256."""
    return base * effective_batch / 256


def _check_shapes(params: Params, grads: Grads) -> None:
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if params[name].shape != np.shape(g):
            raise ValueError(f"shape mismatch for {name!r}: param {params[name].shape}, grad {np.shape(g)}")


def is_bias(name: str, value: np.ndarray) -> bool:
    return name.endswith("bias") or value.ndim < 2 or value.shape[0] == 1


class SGDMomentum:
    def __init__(self, lr: float, momentum: float = 0.9):
        if lr < 0:
            raise ValueError(f"lr must be >= 0, got {lr}")
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def _update(self, name: str, p: np.ndarray, g: np.ndarray) -> None:
        v = self.velocity.get(name)
        v = g.copy() if v is None else self.momentum * v + g
        self.velocity[name] = v
        p -= self.lr * v

    def step(self, params: Params, grads: Grads) -> Params:
        _check_shapes(params, grads)
        for name, g in grads.items():
            self._update(name, params[name], np.asarray(g, dtype=np.float64))
        return params


class LARS(SGDMomentum):
    """Layer-wise trust ratio on top of SGD with momentum.

    Per tensor, the gradient (plus ``weight_decay * p``) is scaled by
    ``trust_coeff * |p| / (|g| + weight_decay * |p| + eps)`` before the momentum
    update; the ratio is 1 if either norm is zero. Tensors matching
    ``exclude`` (biases by default) are updated without the ratio.
    """

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                 eps: float = 1e-9, trust_coeff: float = 1.0,
                 exclude: Callable[[str, np.ndarray], bool] | None = is_bias):
        super().__init__(lr, momentum)
        self.weight_decay = weight_decay
        self.eps = eps
        self.trust_coeff = trust_coeff
        self.exclude = exclude

    def trust_ratio(self, p: np.ndarray, g: np.ndarray) -> float:
        p_norm = float(np.linalg.norm(p))
        g_norm = float(np.linalg.norm(g))
        if p_norm == 0.0 or g_norm == 0.0:
            return 1.0
        return self.trust_coeff * p_norm / (g_norm + self.weight_decay * p_norm + self.eps)

    def step(self, params: Params, grads: Grads) -> Params:
        _check_shapes(params, grads)
        for name, g in grads.items():
            p = params[name]
            g = np.asarray(g, dtype=np.float64)
            if self.exclude is not None and self.exclude(name, p):
                eff = g
            else:
                eff = self.trust_ratio(p, g) * (g + self.weight_decay * p)
            self._update(name, p, eff)
        return params


class Adam:
    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Params, grads: Grads) -> Params:
        _check_shapes(params, grads)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


class GradAccumulator:
    """Sums micro-batch gradients and steps with their mean every ``target`` calls."""

    def __init__(self, target: int = 8):
        if target < 1:
            raise ValueError(f"target must be >= 1, got {target}")
        self.target = target
        self.count = 0
        self.total: dict[str, np.ndarray] = {}

    def accumulate_and_maybe_step(self, optimizer, params: Params, grads: Grads) -> bool:
        _check_shapes(params, grads)
        for name, g in grads.items():
            if name in self.total:
                self.total[name] = self.total[name] + g
            else:
                self.total[name] = np.array(g, dtype=np.float64)
        self.count += 1
        if self.count < self.target:
            return False
        optimizer.step(params, {k: v / self.count for k, v in self.total.items()})
        self.reset()
        return True

    def flush(self, optimizer, params: Params) -> bool:
        """Step on whatever is pending (end of epoch); no-op when empty."""
        if self.count == 0:
            return False
        optimizer.step(params, {k: v / self.count for k, v in self.total.items()})
        self.reset()
        return True

    def reset(self) -> None:
        self.count = 0
        self.total = {}
