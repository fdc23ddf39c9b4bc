"""SGD and Adam over named parameter dicts.

Both optimizers zero the gradients after applying a step, so each training
iteration starts from a clean accumulator.
"""

import numpy as np

from .autodiff import Tensor
from .errors import MissingGrad


class SGD:
    def __init__(self, params: dict, learning_rate: float):
        self.params = dict(params)
        self.learning_rate = float(learning_rate)
        self.step_count = 0

    def step(self):
        for name, p in self.params.items():
            if not p.grad_populated():
                raise MissingGrad(f"parameter '{name}' has no gradient")
            p.values -= self.learning_rate * p.grad
            p.zero_grad()
        self.step_count += 1

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


class Adam:
    """Adam with (beta1, beta2, eps) = (0.9, 0.999, 1e-8) and bias correction."""

    def __init__(self, params: dict, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.learning_rate = float(learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.values) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in self.params.items()}
        self.step_count = 0

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if not p.grad_populated():
                raise MissingGrad(f"parameter '{name}' has no gradient")
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.values -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
