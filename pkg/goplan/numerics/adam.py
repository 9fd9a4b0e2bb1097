from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from goplan.numerics.param_tensor import ParamTensor


def adam_step(
    params: Iterable[ParamTensor],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> bool:
    """One Adam update over ``params``; returns False when the step was skipped.

    A non-finite gradient anywhere skips the whole step and clears every
    gradient, so no parameter moves on partial information.
    """
    params = list(params)
    if not all(p.grad_is_finite() for p in params):
        for p in params:
            p.zero_grad()
        return False

    beta1, beta2 = betas
    for p in params:
        grad = p.grad.astype(np.float64)
        p.step_count += 1
        p.first_moment *= beta1
        p.first_moment += (1 - beta1) * grad
        p.second_moment *= beta2
        p.second_moment += (1 - beta2) * grad * grad
        m_hat = p.first_moment / (1 - beta1**p.step_count)
        v_hat = p.second_moment / (1 - beta2**p.step_count)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        p.values -= update.astype(p.values.dtype)
        p.zero_grad()
    return True


class AdamOptimizer:
    def __init__(
        self,
        name: str,
        params: Iterable[ParamTensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self._log = logging.getLogger(f"goplan.numerics.AdamOptimizer.{name}")
        self.name = name
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.skipped_steps = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self) -> bool:
        applied = adam_step(self.params, self.lr, self.betas, self.eps)
        if not applied:
            self.skipped_steps += 1
            self._log.warning(
                f"{self.name}: non-finite gradient, step skipped "
                f"({self.skipped_steps} so far)"
            )
        return applied

    def skip(self, reason: str):
        """Record a step skipped by the caller, e.g. on a non-finite loss."""
        self.zero_grad()
        self.skipped_steps += 1
        self._log.warning(
            f"{self.name}: {reason}, step skipped ({self.skipped_steps} so far)"
        )
