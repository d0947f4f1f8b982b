"""Optimizers for the hand-rolled tape: AdamW plus a cosine schedule."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from ..errors import InputError, NumericError
from .core import Tensor


class CosineSchedule:
    """Cosine decay from ``base_lr`` to zero over ``total_steps``."""

    def __init__(self, base_lr: float, total_steps: int):
        if total_steps <= 0:
            raise InputError(f"CosineSchedule: total_steps must be > 0, got {total_steps}")
        self.base_lr = float(base_lr)
        self.total_steps = int(total_steps)

    def lr(self, step: int) -> float:
        t = min(max(step, 0), self.total_steps)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / self.total_steps))


class AdamW:
    """Adam with decoupled weight decay.

    The decay term is applied directly to the parameter (``p -= lr*wd*p``)
    rather than folded into the gradient, so it is independent of the
    adaptive scaling.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-4,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 2e-2,
    ):
        self.params = list(params)
        if not self.params:
            raise InputError("AdamW: empty parameter list")
        for p in self.params:
            if not isinstance(p, Tensor) or not p.requires_grad:
                raise InputError("AdamW: every param must be a Tensor with requires_grad")
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """One update from the accumulated ``.grad`` fields.

        ``lr`` overrides the stored learning rate for this step only
        (how the cosine schedule plugs in).
        """
        lr_t = self.lr if lr is None else float(lr)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericError("AdamW: non-finite gradient encountered")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= lr_t * (m_hat / (np.sqrt(v_hat) + self.eps))
            if self.weight_decay:
                p.data -= lr_t * self.weight_decay * p.data
