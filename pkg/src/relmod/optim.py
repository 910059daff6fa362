"""SGD with momentum and Adam over a name -> Tensor parameter dict."""
from __future__ import annotations

import numpy as np


class SGDMomentum:
    slots = ("velocity",)

    def __init__(self, params, momentum: float = 0.9):
        self.params = params
        self.momentum = momentum
        self.steps = 0
        self.velocity = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        for k, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[k]
            v *= self.momentum
            v += p.grad
            p.data -= lr * v
        self.steps += 1

    def state(self) -> dict[str, np.ndarray]:
        return {f"optim.velocity.{k}": v for k, v in self.velocity.items()}

    def load_state(self, tensors: dict, steps: int) -> None:
        for k in self.velocity:
            self.velocity[k] = tensors[f"optim.velocity.{k}"].copy()
        self.steps = steps


class Adam:
    slots = ("m", "v")

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.steps = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for k, p in self.params.items():
            if p.grad is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {f"optim.m.{k}": a for k, a in self.m.items()}
        out.update({f"optim.v.{k}": a for k, a in self.v.items()})
        return out

    def load_state(self, tensors: dict, steps: int) -> None:
        for k in self.m:
            self.m[k] = tensors[f"optim.m.{k}"].copy()
            self.v[k] = tensors[f"optim.v.{k}"].copy()
        self.steps = steps


def make_optimizer(name: str, params, momentum: float = 0.9):
    if name == "sgd_momentum":
        return SGDMomentum(params, momentum)
    if name == "adam":
        return Adam(params)
    raise ValueError(f"unknown optimizer {name!r}")
