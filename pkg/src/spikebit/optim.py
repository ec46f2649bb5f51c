"""Adam and momentum SGD over Parameter lists.

Adam applies decoupled weight decay: values shrink by lr * weight_decay
before the bias-corrected moment update.  SGD folds decay into the
update as lr * (momentum_buffer + weight_decay * value).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter

OPTIMIZER_KINDS = ("adam", "sgd")


class Optimizer:
    kind = ""

    def __init__(self, params: list[Parameter], lr: float, weight_decay: float):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {weight_decay}")
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def _grad(self, p: Parameter) -> np.ndarray:
        return p.grad if p.grad is not None else np.zeros_like(p.data)

    def step(self) -> None:
        raise NotImplementedError


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 weight_decay: float = 1e-3, eps: float = 1e-8):
        super().__init__(params, lr, weight_decay)
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        for i, p in enumerate(self.params):
            g = self._grad(p)
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** self.step_count)
            v_hat = self.v[i] / (1.0 - b2 ** self.step_count)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd(Optimizer):
    kind = "sgd"

    def __init__(self, params, lr: float = 1e-2, momentum: float = 0.9,
                 weight_decay: float = 1e-3):
        super().__init__(params, lr, weight_decay)
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        for i, p in enumerate(self.params):
            g = self._grad(p)
            self.buf[i] = self.momentum * self.buf[i] + g
            p.data -= self.lr * (self.buf[i] + self.weight_decay * p.data)


def make_optimizer(kind: str, params: list[Parameter], **hyper) -> Optimizer:
    if kind == "adam":
        return Adam(params, **hyper)
    if kind == "sgd":
        return Sgd(params, **hyper)
    raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {kind!r}")
