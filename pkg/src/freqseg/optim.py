"""Adam with per-epoch exponential learning-rate decay."""
from __future__ import annotations

from typing import Dict

import numpy as np

from .errors import UsageError
from .params import ParamStore

LR = 1e-4
DECAY = 0.98


class Adam:
    def __init__(self, params: ParamStore, lr: float = LR, decay: float = DECAY,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr0 = lr
        self.decay = decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.epoch = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        for name, p in params.items():
            self.m[name] = np.zeros_like(p.value)
            self.v[name] = np.zeros_like(p.value)

    @property
    def lr(self) -> float:
        return self.lr0 * self.decay ** self.epoch

    def step(self) -> None:
        if not self.params.grads_ready:
            raise UsageError("Adam.step called before backward populated gradients")
        self.t += 1
        lr = self.lr
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.trainable_items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.params.zero_grad()

    def end_epoch(self) -> None:
        self.epoch += 1

    def state(self) -> Dict[str, np.ndarray]:
        out = {"_scalars": np.array([self.t, self.epoch, self.lr0, self.decay,
                                     self.beta1, self.beta2, self.eps], dtype=np.float64)}
        for name in self.m:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        t, epoch, lr0, decay, b1, b2, eps = state["_scalars"]
        self.t, self.epoch = int(t), int(epoch)
        self.lr0, self.decay, self.beta1, self.beta2, self.eps = lr0, decay, b1, b2, eps
        for name in self.m:
            self.m[name] = np.array(state[f"m.{name}"], dtype=np.float64)
            self.v[name] = np.array(state[f"v.{name}"], dtype=np.float64)
