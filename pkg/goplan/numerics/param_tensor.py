from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ParamTensor:
    name: str
    values: np.ndarray
    grad: np.ndarray = field(init=False, repr=False)
    first_moment: np.ndarray = field(init=False, repr=False)
    second_moment: np.ndarray = field(init=False, repr=False)
    step_count: int = field(default=0, init=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values)
        if self.values.dtype not in (np.float32, np.float64):
            self.values = self.values.astype(np.float32)
        if any(dim <= 0 for dim in self.values.shape):
            raise ValueError(f"{self.name}: dims must be positive, got {self.shape}")
        self.grad = np.zeros_like(self.values)
        # moments kept in float64
        self.first_moment = np.zeros(self.values.shape, dtype=np.float64)
        self.second_moment = np.zeros(self.values.shape, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self):
        self.grad.fill(0)

    def accumulate(self, grad: np.ndarray):
        if grad.shape != self.values.shape:
            raise ValueError(
                f"{self.name}: gradient shape {grad.shape} != {self.values.shape}"
            )
        self.grad += grad.astype(self.values.dtype, copy=False)

    def grad_is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.grad)))

    def reset_optimizer_state(self):
        self.first_moment.fill(0.0)
        self.second_moment.fill(0.0)
        self.step_count = 0
